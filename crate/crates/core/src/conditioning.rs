//! Simulation of the conditioning examples seen at training time.
//!
//! Each target sample is paired with the sample whose CLAP embedding
//! conditions it:
//!
//! * baseline: the target itself;
//! * random: a uniformly drawn (pitch, velocity) of the same instrument;
//! * fixed: one per-family reference cell at velocity 100.
//!
//! Unavailable cells resolve to the nearest available pitch and then the
//! nearest available velocity at that pitch, ties going to the lower value.
//! Family and source tags are then dropped independently.
//!
//! Randomness comes from SplitMix64 (Steele, Lea and Flood 2014), a 64-bit
//! generator whose state is a Weyl counter advanced by `0x9E3779B97F4A7C15`
//! and passed through a fixed mixer. Seeded with 0 its first output is
//! `0xE220A8397B1DCDAF`; seeded with 1234567 its first outputs are
//! 6457827717110365317, 3203168211198807973, 9817491932198370423.
//! Every instrument draws from its own stream seeded with
//! `seed ^ fnv1a64(instrument_id)`, so adding or removing one instrument
//! leaves the pairs of the others unchanged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{EmbeddingSet, GridIndex, Manifest, SampleKey, PITCH_COUNT, PITCH_MIN, VELOCITIES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairingError {
    #[error("unknown sample key {0}")]
    UnknownKey(String),
    #[error("unknown instrument {0:?}")]
    UnknownInstrument(String),
    #[error("instrument {0:?} has no samples")]
    EmptyInstrument(String),
    #[error("instrument {0:?} has no family tag; pass one explicitly")]
    MissingFamily(String),
    #[error("unknown family {family:?} for instrument {instrument:?}")]
    UnknownFamily { instrument: String, family: String },
    #[error("dropout probability {0} outside [0, 1]")]
    DropProbability(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bass,
    Brass,
    Flute,
    Guitar,
    Keyboard,
    Mallet,
    Organ,
    Reed,
    String,
    SynthLead,
    Vocal,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Bass,
        Family::Brass,
        Family::Flute,
        Family::Guitar,
        Family::Keyboard,
        Family::Mallet,
        Family::Organ,
        Family::Reed,
        Family::String,
        Family::SynthLead,
        Family::Vocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Bass => "Bass",
            Family::Brass => "Brass",
            Family::Flute => "Flute",
            Family::Guitar => "Guitar",
            Family::Keyboard => "Keyboard",
            Family::Mallet => "Mallet",
            Family::Organ => "Organ",
            Family::Reed => "Reed",
            Family::String => "String",
            Family::SynthLead => "Synth lead",
            Family::Vocal => "Vocal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps free-form family strings to [`Family`]. Lookups ignore case and
/// surrounding whitespace.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyAliases {
    map: HashMap<String, Family>,
}

impl Default for FamilyAliases {
    /// Display names plus NSynth's snake-case spellings.
    fn default() -> Self {
        let mut aliases = FamilyAliases { map: HashMap::new() };
        for family in Family::ALL {
            aliases.insert(family.name(), family);
        }
        aliases.insert("synth_lead", Family::SynthLead);
        aliases.insert("synth-lead", Family::SynthLead);
        aliases.insert("synthlead", Family::SynthLead);
        aliases
    }
}

impl FamilyAliases {
    pub fn empty() -> Self {
        FamilyAliases { map: HashMap::new() }
    }

    pub fn insert(&mut self, alias: &str, family: Family) {
        self.map.insert(alias.trim().to_lowercase(), family);
    }

    pub fn resolve(&self, name: &str) -> Option<Family> {
        self.map.get(&name.trim().to_lowercase()).copied()
    }
}

/// Reference pitch per family, all at one fixed velocity. Note names use the
/// convention C4 = MIDI 60.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPitchTable {
    pitches: BTreeMap<Family, u8>,
    pub velocity: u8,
}

impl Default for FixedPitchTable {
    fn default() -> Self {
        let pitches = Family::ALL
            .iter()
            .map(|&f| {
                let pitch = match f {
                    Family::Bass => 36,
                    Family::Brass | Family::String | Family::SynthLead => 48,
                    Family::Guitar | Family::Keyboard | Family::Organ | Family::Reed | Family::Vocal => 60,
                    Family::Flute | Family::Mallet => 72,
                };
                (f, pitch)
            })
            .collect();
        FixedPitchTable { pitches, velocity: 100 }
    }
}

impl FixedPitchTable {
    pub fn pitch(&self, family: Family) -> u8 {
        self.pitches[&family]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexedInstrument {
    pub family: Option<String>,
    pub source: Option<String>,
    pub cells: BTreeSet<GridIndex>,
}

/// Which cells every instrument holds, without the embeddings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    instruments: BTreeMap<String, IndexedInstrument>,
}

impl DatasetIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, instrument: IndexedInstrument) {
        self.instruments.insert(id.into(), instrument);
    }

    /// The manifest must already be validated.
    pub fn from_manifest(manifest: &Manifest) -> Self {
        let mut index = DatasetIndex::new();
        for inst in &manifest.instruments {
            let cells = inst
                .samples
                .iter()
                .filter_map(|s| GridIndex::from_pitch_velocity(u8::try_from(s.pitch).ok()?, u8::try_from(s.velocity).ok()?).ok())
                .collect();
            index.insert(
                inst.id.clone(),
                IndexedInstrument {
                    family: inst.family.clone(),
                    source: inst.source.clone(),
                    cells,
                },
            );
        }
        index
    }

    pub fn from_set(set: &EmbeddingSet) -> Self {
        let mut index = DatasetIndex::new();
        for (i, meta) in set.instruments().iter().enumerate() {
            index.insert(
                meta.id.clone(),
                IndexedInstrument {
                    family: meta.family.clone(),
                    source: meta.source.clone(),
                    cells: set.instrument_keys(i).iter().map(SampleKey::cell).collect(),
                },
            );
        }
        index
    }

    pub fn instrument(&self, id: &str) -> Result<&IndexedInstrument, PairingError> {
        self.instruments
            .get(id)
            .ok_or_else(|| PairingError::UnknownInstrument(id.to_string()))
    }

    pub fn instruments(&self) -> impl Iterator<Item = (&str, &IndexedInstrument)> {
        self.instruments.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Targets in emission order: instruments by id, cells ascending.
    pub fn targets(&self) -> impl Iterator<Item = SampleKey> + '_ {
        self.instruments
            .iter()
            .flat_map(|(id, inst)| inst.cells.iter().map(move |&c| SampleKey::from_cell(id.clone(), c)))
    }

    fn check_target(&self, target: &SampleKey) -> Result<&IndexedInstrument, PairingError> {
        let inst = self
            .instruments
            .get(&target.instrument_id)
            .ok_or_else(|| PairingError::UnknownKey(target.to_string()))?;
        let cell = GridIndex::from_pitch_velocity(target.pitch, target.velocity)
            .map_err(|_| PairingError::UnknownKey(target.to_string()))?;
        if !inst.cells.contains(&cell) {
            return Err(PairingError::UnknownKey(target.to_string()));
        }
        Ok(inst)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditioningExample {
    pub target: SampleKey,
    pub condition: SampleKey,
    pub family_kept: bool,
    pub source_kept: bool,
}

impl ConditioningExample {
    fn new(target: SampleKey, condition: SampleKey) -> Self {
        ConditioningExample {
            target,
            condition,
            family_kept: true,
            source_kept: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Baseline,
    Random,
    Fixed,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::Random => "random",
            Scheme::Fixed => "fixed",
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Scheme::Baseline),
            "random" => Ok(Scheme::Random),
            "fixed" => Ok(Scheme::Fixed),
            _ => Err(format!("unknown scheme {s:?}, expected baseline, random or fixed")),
        }
    }
}

/// Nearest available pitch, then nearest available velocity at that pitch;
/// ties go to the lower value.
pub fn resolve_nearest(cells: &BTreeSet<GridIndex>, pitch: u8, velocity: u8) -> Option<GridIndex> {
    let best_pitch = cells
        .iter()
        .map(|c| c.pitch())
        .min_by_key(|&p| (p.abs_diff(pitch), p))?;
    cells
        .iter()
        .filter(|c| c.pitch() == best_pitch)
        .min_by_key(|c| (c.velocity().abs_diff(velocity), c.velocity()))
        .copied()
}

pub fn pair_baseline(target: &SampleKey, index: &DatasetIndex) -> Result<ConditioningExample, PairingError> {
    index.check_target(target)?;
    Ok(ConditioningExample::new(target.clone(), target.clone()))
}

/// Uniform integer in `0..n` by multiply-shift.
fn uniform_below(rng: &mut SplitMix64, n: u64) -> u64 {
    ((rng.next_u64() as u128 * n as u128) >> 64) as u64
}

/// Uniform real in [0, 1) with 53 bits.
fn uniform_unit(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws a pitch in 21..=108 and a velocity from the five layers, both
/// uniformly, then resolves to the nearest available cell.
pub fn pair_random(
    target: &SampleKey,
    index: &DatasetIndex,
    rng: &mut SplitMix64,
) -> Result<ConditioningExample, PairingError> {
    let inst = index.check_target(target)?;
    let pitch = PITCH_MIN + uniform_below(rng, PITCH_COUNT as u64) as u8;
    let velocity = VELOCITIES[uniform_below(rng, VELOCITIES.len() as u64) as usize];
    let cell = resolve_nearest(&inst.cells, pitch, velocity)
        .ok_or_else(|| PairingError::EmptyInstrument(target.instrument_id.clone()))?;
    Ok(ConditioningExample::new(
        target.clone(),
        SampleKey::from_cell(target.instrument_id.clone(), cell),
    ))
}

/// Conditions every target of an instrument on the same family reference cell.
/// `family` overrides the instrument's own tag.
pub fn pair_fixed(
    target: &SampleKey,
    index: &DatasetIndex,
    table: &FixedPitchTable,
    aliases: &FamilyAliases,
    family: Option<&str>,
) -> Result<ConditioningExample, PairingError> {
    let inst = index.check_target(target)?;
    let cell = fixed_cell(&target.instrument_id, inst, table, aliases, family)?;
    Ok(ConditioningExample::new(
        target.clone(),
        SampleKey::from_cell(target.instrument_id.clone(), cell),
    ))
}

fn fixed_cell(
    id: &str,
    inst: &IndexedInstrument,
    table: &FixedPitchTable,
    aliases: &FamilyAliases,
    family: Option<&str>,
) -> Result<GridIndex, PairingError> {
    let name = family
        .or(inst.family.as_deref())
        .ok_or_else(|| PairingError::MissingFamily(id.to_string()))?;
    let family = aliases.resolve(name).ok_or_else(|| PairingError::UnknownFamily {
        instrument: id.to_string(),
        family: name.to_string(),
    })?;
    resolve_nearest(&inst.cells, table.pitch(family), table.velocity)
        .ok_or_else(|| PairingError::EmptyInstrument(id.to_string()))
}

/// Drops the family tag, then the source tag, each with probability `p_drop`.
pub fn apply_metadata_dropout(
    mut example: ConditioningExample,
    rng: &mut SplitMix64,
    p_drop: f64,
) -> Result<ConditioningExample, PairingError> {
    if !(0.0..=1.0).contains(&p_drop) {
        return Err(PairingError::DropProbability(p_drop));
    }
    example.family_kept = uniform_unit(rng) >= p_drop;
    example.source_kept = uniform_unit(rng) >= p_drop;
    Ok(example)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn instrument_rng(seed: u64, instrument_id: &str) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed ^ fnv1a64(instrument_id.as_bytes()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingConfig {
    pub scheme: Scheme,
    pub seed: u64,
    pub p_drop: f64,
    pub table: FixedPitchTable,
    pub aliases: FamilyAliases,
    /// Family used for every instrument under the fixed scheme, overriding tags.
    pub family: Option<String>,
}

impl PairingConfig {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        PairingConfig {
            scheme,
            seed,
            p_drop: 0.3,
            table: FixedPitchTable::default(),
            aliases: FamilyAliases::default(),
            family: None,
        }
    }
}

/// One example per target, instruments in id order and cells ascending.
///
/// Per target the random scheme consumes two draws (pitch, velocity) and
/// dropout two more (family, source), all from the instrument's own stream.
pub fn emit_pairs(index: &DatasetIndex, config: &PairingConfig) -> Result<Vec<ConditioningExample>, PairingError> {
    if !(0.0..=1.0).contains(&config.p_drop) {
        return Err(PairingError::DropProbability(config.p_drop));
    }
    let instruments: Vec<(&str, &IndexedInstrument)> = index.instruments().collect();
    let per_instrument = instruments
        .par_iter()
        .map(|&(id, inst)| {
            let mut rng = instrument_rng(config.seed, id);
            let fixed = match config.scheme {
                Scheme::Fixed if !inst.cells.is_empty() => Some(SampleKey::from_cell(
                    id,
                    fixed_cell(id, inst, &config.table, &config.aliases, config.family.as_deref())?,
                )),
                _ => None,
            };
            inst.cells
                .iter()
                .map(|&cell| {
                    let target = SampleKey::from_cell(id, cell);
                    let example = match config.scheme {
                        Scheme::Baseline => ConditioningExample::new(target.clone(), target),
                        Scheme::Random => pair_random(&target, index, &mut rng)?,
                        Scheme::Fixed => ConditioningExample::new(target, fixed.clone().expect("non-empty instrument")),
                    };
                    apply_metadata_dropout(example, &mut rng, config.p_drop)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_instrument.into_iter().flatten().collect())
}

#[derive(Serialize)]
struct KeyRecord<'a> {
    instrument: &'a str,
    pitch: u8,
    velocity: u8,
}

#[derive(Serialize)]
struct PairRecord<'a> {
    target: KeyRecord<'a>,
    condition: KeyRecord<'a>,
    family_kept: bool,
    source_kept: bool,
    scheme: &'a str,
    seed: u64,
}

fn key_record(key: &SampleKey) -> KeyRecord<'_> {
    KeyRecord {
        instrument: &key.instrument_id,
        pitch: key.pitch,
        velocity: key.velocity,
    }
}

/// Writes one JSON object per line.
pub fn write_pairs<W: Write>(
    out: &mut W,
    examples: &[ConditioningExample],
    scheme: Scheme,
    seed: u64,
) -> std::io::Result<()> {
    for e in examples {
        let record = PairRecord {
            target: key_record(&e.target),
            condition: key_record(&e.condition),
            family_kept: e.family_kept,
            source_kept: e.source_kept,
            scheme: scheme.name(),
            seed,
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::GRID_SIZE;

    fn full_grid(family: &str) -> IndexedInstrument {
        IndexedInstrument {
            family: Some(family.into()),
            source: Some("acoustic".into()),
            cells: GridIndex::all().collect(),
        }
    }

    fn span(lo: u8, hi: u8) -> BTreeSet<GridIndex> {
        (lo..=hi)
            .flat_map(|p| VELOCITIES.iter().map(move |&v| GridIndex::from_pitch_velocity(p, v).unwrap()))
            .collect()
    }

    #[test]
    fn splitmix_test_vectors() {
        let mut rng = SplitMix64::seed_from_u64(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        let mut rng = SplitMix64::seed_from_u64(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn table_covers_every_family() {
        let table = FixedPitchTable::default();
        let aliases = FamilyAliases::default();
        let expected = [
            ("bass", 36),
            ("brass", 48),
            ("string", 48),
            ("synth_lead", 48),
            ("guitar", 60),
            ("keyboard", 60),
            ("organ", 60),
            ("reed", 60),
            ("vocal", 60),
            ("flute", 72),
            ("mallet", 72),
        ];
        for (name, pitch) in expected {
            let mut index = DatasetIndex::new();
            index.insert("k", full_grid(name));
            let target = SampleKey::new("k", 30, 50).unwrap();
            let e = pair_fixed(&target, &index, &table, &aliases, None).unwrap();
            assert_eq!((e.condition.pitch, e.condition.velocity), (pitch, 100), "{name}");
        }
        assert_eq!(aliases.resolve("Synth lead"), Some(Family::SynthLead));
        assert_eq!(aliases.resolve(" FLUTE "), Some(Family::Flute));
    }

    #[test]
    fn fixed_fallbacks() {
        let table = FixedPitchTable::default();
        let aliases = FamilyAliases::default();
        let mut index = DatasetIndex::new();
        index.insert(
            "f",
            IndexedInstrument {
                family: Some("flute".into()),
                source: None,
                cells: span(60, 71),
            },
        );
        let e = pair_fixed(&SampleKey::new("f", 60, 25).unwrap(), &index, &table, &aliases, None).unwrap();
        assert_eq!((e.condition.pitch, e.condition.velocity), (71, 100));
        let e2 = pair_fixed(&SampleKey::new("f", 65, 127).unwrap(), &index, &table, &aliases, None).unwrap();
        assert_eq!(e.condition, e2.condition);

        // Equidistant pitches and velocities: lower wins.
        let cells: BTreeSet<GridIndex> = [(58, 75), (62, 127), (58, 127)]
            .iter()
            .map(|&(p, v)| GridIndex::from_pitch_velocity(p, v).unwrap())
            .collect();
        let c = resolve_nearest(&cells, 60, 100).unwrap();
        assert_eq!((c.pitch(), c.velocity()), (58, 75));

        index.insert(
            "u",
            IndexedInstrument {
                family: Some("theremin".into()),
                source: None,
                cells: span(60, 60),
            },
        );
        let target = SampleKey::new("u", 60, 25).unwrap();
        assert!(matches!(
            pair_fixed(&target, &index, &table, &aliases, None),
            Err(PairingError::UnknownFamily { .. })
        ));
        assert!(pair_fixed(&target, &index, &table, &aliases, Some("bass")).is_ok());
    }

    #[test]
    fn baseline_and_missing_keys() {
        let mut index = DatasetIndex::new();
        index.insert("k", full_grid("bass"));
        let t = SampleKey::new("k", 60, 75).unwrap();
        assert_eq!(pair_baseline(&t, &index).unwrap().condition, t);
        let missing = SampleKey::new("z", 60, 75).unwrap();
        assert!(pair_baseline(&missing, &index).is_err());
    }

    #[test]
    fn random_with_one_sample_is_forced() {
        let mut index = DatasetIndex::new();
        index.insert(
            "one",
            IndexedInstrument {
                family: None,
                source: None,
                cells: [GridIndex::new(123).unwrap()].into_iter().collect(),
            },
        );
        let t = SampleKey::from_cell("one", GridIndex::new(123).unwrap());
        let mut rng = SplitMix64::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(pair_random(&t, &index, &mut rng).unwrap().condition, t);
        }
    }

    #[test]
    fn random_draws_cover_the_grid() {
        let mut index = DatasetIndex::new();
        index.insert("k", full_grid("bass"));
        let t = SampleKey::new("k", 60, 75).unwrap();
        let mut rng = SplitMix64::seed_from_u64(11);
        let mut counts = vec![0u64; GRID_SIZE];
        for _ in 0..20_000 {
            counts[pair_random(&t, &index, &mut rng).unwrap().condition.cell().value()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = SplitMix64::seed_from_u64(5);
        let t = SampleKey::new("k", 60, 75).unwrap();
        let e = ConditioningExample::new(t.clone(), t);
        let kept = apply_metadata_dropout(e.clone(), &mut rng, 0.0).unwrap();
        assert!(kept.family_kept && kept.source_kept);
        let dropped = apply_metadata_dropout(e.clone(), &mut rng, 1.0).unwrap();
        assert!(!dropped.family_kept && !dropped.source_kept);
        assert!(apply_metadata_dropout(e, &mut rng, 1.5).is_err());
    }

    #[test]
    fn emitted_file_is_reproducible() {
        let mut index = DatasetIndex::new();
        index.insert("b", full_grid("guitar"));
        index.insert(
            "a",
            IndexedInstrument {
                family: Some("reed".into()),
                source: None,
                cells: span(40, 42),
            },
        );
        for scheme in [Scheme::Baseline, Scheme::Random, Scheme::Fixed] {
            let config = PairingConfig::new(scheme, 77);
            let write = || {
                let mut buf = Vec::new();
                write_pairs(&mut buf, &emit_pairs(&index, &config).unwrap(), scheme, 77).unwrap();
                buf
            };
            let first = write();
            assert_eq!(first, write());
            let text = String::from_utf8(first).unwrap();
            assert_eq!(text.lines().count(), 15 + GRID_SIZE);
            assert!(text.lines().next().unwrap().starts_with(
                "{\"target\":{\"instrument\":\"a\",\"pitch\":40,\"velocity\":25},\"condition\":"
            ));
        }
    }

    #[test]
    fn baseline_over_three_samples() {
        let mut index = DatasetIndex::new();
        index.insert(
            "k",
            IndexedInstrument {
                family: None,
                source: None,
                cells: (0..3).map(|i| GridIndex::new(i).unwrap()).collect(),
            },
        );
        let mut config = PairingConfig::new(Scheme::Baseline, 1);
        config.p_drop = 0.0;
        let pairs = emit_pairs(&index, &config).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|e| e.target == e.condition && e.family_kept && e.source_kept));
    }
}
