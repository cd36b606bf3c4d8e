use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::kato::TestSet;
use crate::verdict::Verdict;

/// Parsed experiment manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentManifest {
    pub manifold: String,
    pub kernel: KernelSection,
    /// Default potential for checks that do not name their own.
    pub potential: Option<String>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(rename = "check")]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "auto")]
    pub method: String,
}

fn auto() -> String {
    "auto".into()
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { method: auto() }
    }
}

/// One `[[check]]` table: the shared keys plus the kind-specific parameters.
#[derive(Debug, Clone, Serialize)]
pub struct CheckSpec {
    pub name: Option<String>,
    pub manifold: Option<String>,
    pub potential: Option<String>,
    /// Expected verdict of a negative control; the check passes when the
    /// observed verdict matches it.
    pub expect: Option<Verdict>,
    #[serde(flatten)]
    pub check: Check,
}

impl CheckSpec {
    pub fn new(check: Check) -> Self {
        Self {
            name: None,
            manifold: None,
            potential: None,
            expect: None,
            check,
        }
    }

    pub fn on(mut self, manifold: &str) -> Self {
        self.manifold = Some(manifold.into());
        self
    }

    pub fn with_potential(mut self, potential: &str) -> Self {
        self.potential = Some(potential.into());
        self
    }

    pub fn expecting(mut self, verdict: Verdict) -> Self {
        self.expect = Some(verdict);
        self
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    manifold: String,
    #[serde(default)]
    kernel: KernelSection,
    potential: Option<String>,
    #[serde(default)]
    seed: u64,
    output: Option<PathBuf>,
    #[serde(default)]
    check: Vec<Spanned<toml::Table>>,
}

/// Kind-specific parameters, tagged by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Check {
    KernelCheck(KernelCheckParams),
    KatoNorm(KatoNormParams),
    IsKato(IsKatoParams),
    HolderCheck(HolderParams),
    ControlPair(ControlPairParams),
    FkVerify(FkVerifyParams),
    MviSweep(MviParams),
    HeatBound(HeatBoundParams),
    FeynmanKac(FeynmanKacParams),
    ProjectCheck(ProjectParams),
    KatoExponential(KatoExponentialParams),
    SemigroupBound(SemigroupBoundParams),
    RieszThorin(RieszThorinParams),
    Coulomb(CoulombParams),
}

pub const CHECK_KINDS: [&str; 14] = [
    "kernel-check",
    "kato-norm",
    "is-kato",
    "holder-check",
    "control-pair",
    "fk-verify",
    "mvi-sweep",
    "heat-bound",
    "feynman-kac",
    "project-check",
    "kato-exponential",
    "semigroup-bound",
    "riesz-thorin",
    "coulomb",
];

impl Check {
    pub fn kind(&self) -> &'static str {
        match self {
            Check::KernelCheck(_) => "kernel-check",
            Check::KatoNorm(_) => "kato-norm",
            Check::IsKato(_) => "is-kato",
            Check::HolderCheck(_) => "holder-check",
            Check::ControlPair(_) => "control-pair",
            Check::FkVerify(_) => "fk-verify",
            Check::MviSweep(_) => "mvi-sweep",
            Check::HeatBound(_) => "heat-bound",
            Check::FeynmanKac(_) => "feynman-kac",
            Check::ProjectCheck(_) => "project-check",
            Check::KatoExponential(_) => "kato-exponential",
            Check::SemigroupBound(_) => "semigroup-bound",
            Check::RieszThorin(_) => "riesz-thorin",
            Check::Coulomb(_) => "coulomb",
        }
    }

    /// Builds a check from its kind and a parameter table.
    pub fn from_table(kind: &str, mut table: toml::Table) -> Result<Self> {
        table.insert("kind".into(), toml::Value::String(kind.into()));
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidManifest(e.message().to_string()))
    }
}

macro_rules! params {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: $ty),*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default),* }
            }
        }
    };
}

params!(KernelCheckParams {
    times: Vec<f64> = vec![0.1, 0.5],
    /// Sample points; defaults to the reference point and two offsets.
    points: Option<Vec<Vec<f64>>> = None,
    /// Chapman-Kolmogorov tolerance; 1e-6 for closed forms, 1e-4 otherwise.
    ck_tolerance: Option<f64> = None,
    mass_tolerance: f64 = 1e-6,
});

params!(KatoNormParams {
    t: f64 = 0.1,
    points: Option<Vec<Vec<f64>>> = None,
    depth: usize = 16,
});

params!(IsKatoParams {
    t_max: f64 = 1.0,
    levels: usize = 6,
    threshold: f64 = 0.5,
    points: Option<Vec<Vec<f64>>> = None,
    depth: usize = 16,
});

params!(HolderParams {
    q: f64 = 2.0,
    /// `on-diag` or `li-yau`.
    control: String = "on-diag".into(),
    s_values: Vec<f64> = vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0],
    points: Option<Vec<Vec<f64>>> = None,
    /// Radius of the norm window on non-compact models.
    window: f64 = 3.0,
    h: f64 = 0.1,
});

params!(ControlPairParams {
    /// `on-diag`, `li-yau` or `faber-krahn`.
    construction: String = "on-diag".into(),
    t_lo: f64 = 1e-4,
    samples: usize = 50,
    radius: f64 = 1.0,
    a: Option<f64> = None,
});

params!(FkVerifyParams {
    radius: f64 = 1.0,
    a: Option<f64> = None,
    sets: Option<Vec<TestSet>> = None,
    /// Cells per axis of the coarse grid; 40 in one or two dimensions, 12 in three.
    n: Option<usize> = None,
});

params!(MviParams {
    a: Option<f64> = None,
    radius: f64 = 1.0,
    taus: Vec<f64> = vec![1.0, 0.5, 0.25],
    t_over_tau: Vec<f64> = vec![1.25, 2.0, 4.0],
    qs: Vec<f64> = vec![1.0, 1.5, 2.0],
    sources: Option<Vec<Vec<f64>>> = None,
    time_nodes: usize = 12,
    space_step: f64 = 0.15,
});

params!(HeatBoundParams {
    radius: f64 = 1.0,
    a: Option<f64> = None,
    t_range: (f64, f64) = (1e-3, 10.0),
    samples: usize = 40,
    points: Option<Vec<Vec<f64>>> = None,
});

params!(FeynmanKacParams {
    t: f64 = 1.0,
    step: f64 = 1e-3,
    paths: usize = 10_000,
    start: Option<Vec<f64>> = None,
    terminal: String = "const:1".into(),
    /// Grid nodes per axis of the spectral reference (circle and tori).
    spectral_n: usize = 256,
    z_max: f64 = 4.0,
});

params!(ProjectParams {
    /// Factor index, starting at 1.
    factor: usize = 1,
    t: f64 = 0.5,
    paths: usize = 0,
    step: f64 = 1e-2,
    start: Option<Vec<f64>> = None,
});

params!(KatoExponentialParams {
    times: Vec<f64> = vec![0.25, 0.5, 1.0, 1.5, 2.0],
    deltas: Vec<f64> = vec![1.5, 2.0, 4.0],
    paths: usize = 2000,
    step: f64 = 1e-2,
    starts: Option<Vec<Vec<f64>>> = None,
});

params!(SemigroupBoundParams {
    n: usize = 64,
    times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect(),
    deltas: Vec<f64> = vec![1.5, 2.0, 4.0],
    qs: Vec<f64> = vec![1.0, 2.0, 4.0, f64::INFINITY],
    /// Signed potential `w` whose negative part is the check's potential,
    /// for the domination test.
    signed: Option<String> = None,
});

params!(RieszThorinParams {
    n: usize = 64,
    t: f64 = 1.0,
    rs: Vec<f64> = vec![0.25, 0.5, 0.75],
    tolerance: f64 = 1e-10,
});

params!(CoulombParams {
    radii: Vec<f64> = vec![0.1, 1.0, 10.0],
    tolerance: f64 = 1e-6,
    kato: bool = true,
    t_max: f64 = 1.0,
    levels: usize = 6,
});

/// Line and column (1-based) of a byte offset.
fn locate(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(text: &str, offset: usize, message: impl Into<String>) -> Error {
    let (line, column) = locate(text, offset);
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Offset of the first backticked name in `message` that occurs as a key
/// inside `span`, so that errors point at the offending key.
fn key_offset(text: &str, span: std::ops::Range<usize>, message: &str) -> usize {
    // the span may cover only the table header; extend it to the next header
    let end = text[span.end..].find("\n[").map_or(text.len(), |i| span.end + i);
    let body = &text[span.start..end];
    message
        .split('`')
        .skip(1)
        .step_by(2)
        .find_map(|name| {
            body.match_indices(name)
                .find(|(i, _)| body[i + name.len()..].trim_start().starts_with('='))
                .map(|(i, _)| span.start + i)
        })
        .unwrap_or(span.start)
}

const SHARED_KEYS: [&str; 4] = ["name", "manifold", "potential", "expect"];

impl ExperimentManifest {
    /// Parses and validates a manifest; errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            parse_error(text, offset, e.message().trim())
        })?;
        let mut checks = Vec::with_capacity(raw.check.len());
        for spanned in raw.check {
            let span = spanned.span();
            let mut table = spanned.into_inner();
            let mut shared = [None, None, None, None];
            for (slot, key) in shared.iter_mut().zip(SHARED_KEYS) {
                if let Some(v) = table.remove(key) {
                    match v {
                        toml::Value::String(s) => *slot = Some(s),
                        _ => return Err(parse_error(text, key_offset(text, span.clone(), &format!("`{key}`")), format!("`{key}` must be a string"))),
                    }
                }
            }
            let kind = match table.remove("kind") {
                Some(toml::Value::String(k)) => k,
                Some(_) => return Err(parse_error(text, key_offset(text, span, "`kind`"), "`kind` must be a string")),
                None => return Err(parse_error(text, span.start, "check without `kind`")),
            };
            if !CHECK_KINDS.contains(&kind.as_str()) {
                return Err(parse_error(
                    text,
                    key_offset(text, span, "`kind`"),
                    format!("unknown check kind `{kind}`; expected one of {}", CHECK_KINDS.join(", ")),
                ));
            }
            let check = Check::from_table(&kind, table).map_err(|e| {
                let msg = e.to_string();
                parse_error(text, key_offset(text, span.clone(), &msg), msg.trim_start_matches("invalid manifest: "))
            })?;
            let [name, manifold, potential, expect] = shared;
            let expect = match expect {
                Some(v) => Some(match v.as_str() {
                    "PASS" => Verdict::Pass,
                    "FAIL" => Verdict::Fail,
                    "INCONCLUSIVE" => Verdict::Inconclusive,
                    _ => {
                        return Err(parse_error(
                            text,
                            key_offset(text, span, "`expect`"),
                            "`expect` must be PASS, FAIL or INCONCLUSIVE",
                        ))
                    }
                }),
                None => None,
            };
            checks.push(CheckSpec {
                name,
                manifold,
                potential,
                expect,
                check,
            });
        }
        let manifest = Self {
            manifold: raw.manifold,
            kernel: raw.kernel,
            potential: raw.potential,
            seed: raw.seed,
            output: raw.output,
            checks,
        };
        manifest.validate().map_err(|e| match e {
            Error::Parse { .. } => e,
            other => {
                let needle = match &other {
                    Error::Spec { input, .. } => input.clone(),
                    _ => String::new(),
                };
                let offset = if needle.is_empty() { None } else { text.find(&needle) };
                parse_error(text, offset.unwrap_or(0), other.to_string())
            }
        })?;
        Ok(manifest)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// A manifest with no checks.
    pub fn empty(manifold: &str) -> Self {
        Self {
            manifold: manifold.into(),
            kernel: KernelSection::default(),
            potential: None,
            seed: 0,
            output: None,
            checks: Vec::new(),
        }
    }

    /// Spec strings must parse and every check must have what it needs.
    pub fn validate(&self) -> Result<()> {
        let base: crate::geometry::ManifoldModel = self.manifold.parse()?;
        let _: crate::heat_kernel::KernelMethod = self.kernel.method.parse()?;
        crate::heat_kernel::HeatKernelEngine::with_method(&base, self.kernel.method.parse()?)?;
        for (i, spec) in self.checks.iter().enumerate() {
            let model = match &spec.manifold {
                Some(m) => m.parse()?,
                None => base.clone(),
            };
            let needs_potential = matches!(
                spec.check,
                Check::KatoNorm(_)
                    | Check::IsKato(_)
                    | Check::HolderCheck(_)
                    | Check::FeynmanKac(_)
                    | Check::ProjectCheck(_)
                    | Check::KatoExponential(_)
                    | Check::SemigroupBound(_)
                    | Check::RieszThorin(_)
            );
            let potential = spec.potential.as_ref().or(self.potential.as_ref());
            if needs_potential && potential.is_none() {
                return Err(Error::InvalidManifest(format!(
                    "check {} ({}) needs a potential",
                    i + 1,
                    spec.check.kind()
                )));
            }
            if let (true, Some(p)) = (needs_potential, potential) {
                match &spec.check {
                    Check::ProjectCheck(pp) => {
                        let (l, r) = model.factors().ok_or_else(|| {
                            Error::InvalidManifest(format!("check {} (project-check) needs a product manifold", i + 1))
                        })?;
                        crate::potentials::Potential::parse(p, if pp.factor == 2 { r } else { l })?;
                    }
                    _ => {
                        crate::potentials::Potential::parse(p, &model)?;
                    }
                }
            }
            if let Check::SemigroupBound(SemigroupBoundParams { signed: Some(s), .. }) = &spec.check {
                crate::potentials::Potential::parse(s, &model)?;
            }
            if let Check::FeynmanKac(fk) = &spec.check {
                crate::potentials::Potential::parse(&fk.terminal, &model)?;
            }
        }
        Ok(())
    }

    /// TOML rendering that parses back to the same manifest.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidManifest(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_its_position() {
        let text = "manifold = \"circle\"\n\n[[check]]\nkind = \"kernel-check\"\n  bogus = 3\n";
        match ExperimentManifest::parse(text) {
            Err(Error::Parse { line, column, message }) => {
                assert_eq!((line, column), (5, 3), "{message}");
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let err = ExperimentManifest::parse("manifold = \"circle\"\nextra = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_manifold_string_is_located() {
        let err = ExperimentManifest::parse("seed = 1\nmanifold = \"klein\"\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn parameters_default_and_round_trip() {
        let text = r#"
manifold = "euclidean:3"
potential = "radialpower:beta=1:center=0,0,0"
seed = 9

[kernel]
method = "auto"

[[check]]
kind = "is-kato"
levels = 4

[[check]]
kind = "semigroup-bound"
manifold = "circle"
potential = "const:1"
qs = [1.0, inf]
"#;
        let m = ExperimentManifest::parse(text).unwrap();
        assert_eq!(m.checks.len(), 2);
        match &m.checks[0].check {
            Check::IsKato(p) => {
                assert_eq!(p.levels, 4);
                assert_eq!(p.t_max, 1.0);
            }
            other => panic!("{other:?}"),
        }
        let again = ExperimentManifest::parse(&m.to_toml().unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&m).unwrap());
    }

    #[test]
    fn missing_potential_is_rejected() {
        let text = "manifold = \"circle\"\n[[check]]\nkind = \"is-kato\"\n";
        assert!(ExperimentManifest::parse(text).is_err());
    }
}
