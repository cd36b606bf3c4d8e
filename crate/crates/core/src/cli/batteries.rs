use super::ExperimentManifest;
use crate::error::{Error, Result};

/// A built-in manifest.
#[derive(Debug, Clone, Copy)]
pub struct Battery {
    pub name: &'static str,
    pub description: &'static str,
    pub manifest: &'static str,
}

pub const BATTERIES: [Battery; 3] = [
    Battery {
        name: "core",
        description: "kernel consistency on all models, control pairs, Hölder bound, Faber-Krahn, Kato verdicts, mean value inequality, Coulomb",
        manifest: include_str!("batteries/core.toml"),
    },
    Battery {
        name: "stochastic",
        description: "Feynman-Kac against the spectral semigroup, projection onto a factor, exponential moments",
        manifest: include_str!("batteries/stochastic.toml"),
    },
    Battery {
        name: "semigroup",
        description: "L^q operator norm bounds, domination and Riesz-Thorin interpolation on the circle",
        manifest: include_str!("batteries/semigroup.toml"),
    },
];

/// Names and descriptions of the built-in batteries, in a fixed order.
pub fn list_batteries() -> String {
    BATTERIES
        .iter()
        .map(|b| format!("{:<12} {}\n", b.name, b.description))
        .collect()
}

pub fn battery(name: &str) -> Result<ExperimentManifest> {
    let b = BATTERIES
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::InvalidManifest(format!("no battery named `{name}`")))?;
    ExperimentManifest::parse(b.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batteries_parse_and_list_stably() {
        for b in BATTERIES {
            battery(b.name).unwrap();
        }
        let listing = list_batteries();
        assert_eq!(listing, list_batteries());
        let names: Vec<&str> = listing.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(names, ["core", "stochastic", "semigroup"]);
    }
}
