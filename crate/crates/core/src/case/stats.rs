//! Per-field missingness statistics over a corpus, one row per semantic
//! field, counted per valid vehicle slot.

use super::{AccidentCase, Field, Provenance};
use std::fmt::Write;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FieldStats {
    pub present: usize,
    pub unknown: usize,
    pub missing: usize,
    pub malformed: usize,
}

impl FieldStats {
    pub fn total(&self) -> usize {
        self.present + self.unknown + self.missing + self.malformed
    }

    pub fn fraction_present(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.present as f64 / t as f64
        }
    }

    fn count<T>(&mut self, f: &Field<T>) {
        match f.prov {
            Provenance::Present => self.present += 1,
            Provenance::Unknown => self.unknown += 1,
            Provenance::Missing => self.missing += 1,
            Provenance::Malformed(_) => self.malformed += 1,
        }
    }

    /// Like `count`, but a present-yet-empty collection is still missing data.
    fn count_nonempty<T>(&mut self, f: &Field<Vec<T>>, min_len: usize) {
        if f.prov == Provenance::Present && f.value.len() < min_len {
            self.missing += 1;
        } else {
            self.count(f);
        }
    }
}

pub const STAT_FIELDS: [&str; 7] =
    ["trajectory", "impact_area", "speed_limit", "pre_movement", "avoidance", "edr", "initial_lane"];

#[derive(Debug, Clone, Default)]
pub struct CorpusStats {
    pub n_cases: usize,
    pub n_vehicles: usize,
    pub trajectory: FieldStats,
    pub impact_area: FieldStats,
    pub speed_limit: FieldStats,
    pub pre_movement: FieldStats,
    pub avoidance: FieldStats,
    pub edr: FieldStats,
    pub initial_lane: FieldStats,
}

impl CorpusStats {
    pub fn add_case(&mut self, case: &AccidentCase) {
        self.n_cases += 1;
        for slot in case.valid_slots() {
            self.n_vehicles += 1;
            self.trajectory.count_nonempty(&case.raw_points[slot], 2);
            self.impact_area.count(&case.annotations.impact_sides[slot]);
            self.speed_limit.count(&case.vehicles[slot].speed_limit);
            self.pre_movement.count(&case.vehicles[slot].pre_movement);
            self.avoidance.count(&case.vehicles[slot].avoidance);
            self.edr.count_nonempty(&case.edr[slot], 1);
            self.initial_lane.count(&case.vehicles[slot].initial_lane);
        }
    }

    pub fn rows(&self) -> [(&'static str, FieldStats); 7] {
        [
            ("trajectory", self.trajectory),
            ("impact_area", self.impact_area),
            ("speed_limit", self.speed_limit),
            ("pre_movement", self.pre_movement),
            ("avoidance", self.avoidance),
            ("edr", self.edr),
            ("initial_lane", self.initial_lane),
        ]
    }

    pub fn row(&self, field: &str) -> Option<FieldStats> {
        self.rows().iter().find(|(name, _)| *name == field).map(|(_, s)| *s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,present,unknown,missing,malformed,total,present_frac\n");
        for (name, s) in self.rows() {
            writeln!(
                out,
                "{name},{},{},{},{},{},{}",
                s.present,
                s.unknown,
                s.missing,
                s.malformed,
                s.total(),
                s.fraction_present()
            )
            .unwrap();
        }
        out
    }
}

pub fn corpus_stats<'a>(cases: impl IntoIterator<Item = &'a AccidentCase>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for case in cases {
        stats.add_case(case);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::super::ingest_case;
    use super::*;

    #[test]
    fn counts_split_by_provenance() {
        let a = ingest_case(
            r#"{"case_id": "a", "vehicles": [
                {"slot": 0, "speed_limit": 13.4, "pre_movement": "going-straight",
                 "survey_points": [[0,0],[1,0]], "edr": [[-1.0, 3.0]]},
                {"slot": 1, "speed_limit": "unknown", "avoidance": "none"}
            ]}"#,
        )
        .unwrap()
        .case;
        let b = ingest_case(
            r#"{"case_id": "b", "vehicles": [
                {"slot": 0, "speed_limit": {"bad": true}, "survey_points": []}
            ]}"#,
        )
        .unwrap()
        .case;

        let stats = corpus_stats([&a, &b]);
        assert_eq!(stats.n_cases, 2);
        assert_eq!(stats.n_vehicles, 3);
        assert_eq!(stats.speed_limit, FieldStats { present: 1, unknown: 1, missing: 0, malformed: 1 });
        // explicit empty survey arrays still count as missing trajectories
        assert_eq!(stats.trajectory, FieldStats { present: 1, unknown: 0, missing: 2, malformed: 0 });
        assert_eq!(stats.edr.present, 1);
        assert_eq!(stats.row("avoidance").unwrap().present, 1);
        let csv = stats.to_csv();
        assert!(csv.starts_with("field,present,"));
        assert_eq!(csv.lines().count(), 8);
    }
}
