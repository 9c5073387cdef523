//! Opaque identifiers and the generator that mints them.

use std::fmt;

use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($($name:ident => $prefix:literal),* $(,)?) => {$(
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    )*};
}

id_type! {
    SessionId => "ses",
    TabId => "tab",
    ImageId => "img",
    IdeaId => "idea",
    SketchId => "sk",
    RoundId => "rnd",
    JobId => "job",
}

/// Mints ids. `random()` is for live use; `seeded()` makes whole sessions
/// reproducible in tests and offline demos.
pub struct IdGenerator {
    rng: Mutex<Option<ChaCha8Rng>>,
}

impl IdGenerator {
    pub fn random() -> Self {
        Self {
            rng: Mutex::new(None),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: Mutex::new(Some(ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    fn token(&self) -> String {
        let mut bytes = [0u8; 16];
        match self.rng.lock().as_mut() {
            Some(rng) => rng.fill_bytes(&mut bytes),
            None => rand::thread_rng().fill_bytes(&mut bytes),
        }
        uuid::Builder::from_random_bytes(bytes)
            .into_uuid()
            .simple()
            .to_string()
    }

    fn make(&self, prefix: &str) -> String {
        format!("{prefix}_{}", &self.token()[..20])
    }

    pub fn session(&self) -> SessionId {
        SessionId(self.make(SessionId::PREFIX))
    }
    pub fn tab(&self) -> TabId {
        TabId(self.make(TabId::PREFIX))
    }
    pub fn image(&self) -> ImageId {
        ImageId(self.make(ImageId::PREFIX))
    }
    pub fn idea(&self) -> IdeaId {
        IdeaId(self.make(IdeaId::PREFIX))
    }
    pub fn round(&self) -> RoundId {
        RoundId(self.make(RoundId::PREFIX))
    }
    pub fn job(&self) -> JobId {
        JobId(self.make(JobId::PREFIX))
    }
}

impl Default for IdGenerator {
    fn default() -> Self {
        Self::random()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_ids_repeat() {
        let a = IdGenerator::seeded(3);
        let b = IdGenerator::seeded(3);
        assert_eq!(a.image(), b.image());
        assert_eq!(a.tab(), b.tab());
        assert!(a.idea().as_str().starts_with("idea_"));
    }

    #[test]
    fn random_ids_differ() {
        let g = IdGenerator::random();
        assert_ne!(g.session(), g.session());
    }
}
