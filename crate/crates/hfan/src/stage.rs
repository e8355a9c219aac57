//! One per-stage unit: align both streams, then adaptively fuse them.
//! Output shape equals input shape.

use rand::Rng;

use tensor_core::{ParamStore, Result, Scalar, Tape, Val};

use crate::adapt::Fat;
use crate::align::Fam;

pub struct HfanStage {
    pub fam: Fam,
    pub fat: Fat,
}

impl HfanStage {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        d_cap: usize,
        share_poc: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(HfanStage {
            fam: Fam::new(store, &format!("{name}.fam"), channels, d_cap, share_poc, rng)?,
            fat: Fat::new(store, &format!("{name}.fat"), channels, rng)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        appearance: Val,
        motion: Val,
        train: bool,
    ) -> Result<Val> {
        let (aligned_app, aligned_mot) = self.fam.forward(tape, store, appearance, motion, train)?;
        self.fat.forward(tape, store, aligned_app, aligned_mot, train)
    }
}
