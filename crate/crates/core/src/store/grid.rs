//! Canonical pitch × velocity grid.
//!
//! Cells are ordered pitch-major, velocity-minor: index = (pitch − 21)·5 + velocity rank.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::StoreError;

pub const PITCH_MIN: u8 = 21;
pub const PITCH_MAX: u8 = 108;
pub const PITCH_COUNT: usize = 88;
/// MIDI velocity layers, ascending.
pub const VELOCITIES: [u8; 5] = [25, 50, 75, 100, 127];
pub const VELOCITY_COUNT: usize = VELOCITIES.len();
/// Number of cells on the full grid (88 pitches × 5 velocities).
pub const GRID_SIZE: usize = PITCH_COUNT * VELOCITY_COUNT;

pub fn check_pitch(pitch: u8) -> Result<(), StoreError> {
    if (PITCH_MIN..=PITCH_MAX).contains(&pitch) {
        Ok(())
    } else {
        Err(StoreError::PitchOutOfRange(pitch as i64))
    }
}

pub fn velocity_rank(velocity: u8) -> Result<usize, StoreError> {
    VELOCITIES
        .iter()
        .position(|&v| v == velocity)
        .ok_or(StoreError::InvalidVelocity(velocity as i64))
}

/// Position of a (pitch, velocity) cell on the canonical grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridIndex(u16);

impl GridIndex {
    pub fn new(value: usize) -> Result<Self, StoreError> {
        if value < GRID_SIZE {
            Ok(GridIndex(value as u16))
        } else {
            Err(StoreError::GridIndexOutOfRange(value))
        }
    }

    pub fn from_pitch_velocity(pitch: u8, velocity: u8) -> Result<Self, StoreError> {
        check_pitch(pitch)?;
        let rank = velocity_rank(velocity)?;
        Ok(GridIndex(
            ((pitch - PITCH_MIN) as usize * VELOCITY_COUNT + rank) as u16,
        ))
    }

    #[inline]
    pub fn value(self) -> usize {
        self.0 as usize
    }

    pub fn pitch(self) -> u8 {
        PITCH_MIN + (self.value() / VELOCITY_COUNT) as u8
    }

    pub fn velocity(self) -> u8 {
        VELOCITIES[self.value() % VELOCITY_COUNT]
    }

    pub fn velocity_rank(self) -> usize {
        self.value() % VELOCITY_COUNT
    }

    /// All 440 cells in canonical order.
    pub fn all() -> impl Iterator<Item = GridIndex> {
        (0..GRID_SIZE as u16).map(GridIndex)
    }
}

impl fmt::Display for GridIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (pitch {}, velocity {})", self.0, self.pitch(), self.velocity())
    }
}

/// Address of one single-shot sample.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub instrument_id: String,
    pub pitch: u8,
    pub velocity: u8,
}

impl SampleKey {
    pub fn new(instrument_id: impl Into<String>, pitch: u8, velocity: u8) -> Result<Self, StoreError> {
        check_pitch(pitch)?;
        velocity_rank(velocity)?;
        Ok(SampleKey {
            instrument_id: instrument_id.into(),
            pitch,
            velocity,
        })
    }

    pub fn from_cell(instrument_id: impl Into<String>, cell: GridIndex) -> Self {
        SampleKey {
            instrument_id: instrument_id.into(),
            pitch: cell.pitch(),
            velocity: cell.velocity(),
        }
    }

    pub fn cell(&self) -> GridIndex {
        // Fields are validated on construction; a hand-built key with bad values panics here.
        GridIndex::from_pitch_velocity(self.pitch, self.velocity)
            .expect("sample key outside the canonical grid")
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.instrument_id, self.pitch, self.velocity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijection_over_full_grid() {
        let mut seen = vec![false; GRID_SIZE];
        for pitch in PITCH_MIN..=PITCH_MAX {
            for &velocity in &VELOCITIES {
                let idx = GridIndex::from_pitch_velocity(pitch, velocity).unwrap();
                assert_eq!((idx.pitch(), idx.velocity()), (pitch, velocity));
                assert!(!seen[idx.value()]);
                seen[idx.value()] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn ordering_is_pitch_major() {
        assert_eq!(GridIndex::from_pitch_velocity(21, 25).unwrap().value(), 0);
        assert_eq!(GridIndex::from_pitch_velocity(21, 127).unwrap().value(), 4);
        assert_eq!(GridIndex::from_pitch_velocity(22, 25).unwrap().value(), 5);
        assert_eq!(GridIndex::from_pitch_velocity(108, 127).unwrap().value(), 439);
    }

    #[test]
    fn rejects_out_of_range_keys() {
        assert!(matches!(
            SampleKey::new("a", 20, 100),
            Err(StoreError::PitchOutOfRange(20))
        ));
        assert!(matches!(
            SampleKey::new("a", 109, 100),
            Err(StoreError::PitchOutOfRange(109))
        ));
        assert!(matches!(
            SampleKey::new("a", 60, 90),
            Err(StoreError::InvalidVelocity(90))
        ));
        assert!(GridIndex::new(440).is_err());
    }
}
