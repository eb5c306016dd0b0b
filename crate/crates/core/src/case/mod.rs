//! Case schema: report semantics, annotations, evidence, and the forgiving
//! JSON ingestion that normalizes missingness. See `docs/case-schema.md` for
//! the file format.

mod ingest;
mod serialize;
pub mod corpus;
pub mod stats;

pub use ingest::ingest_case;
pub use serialize::serialize_case;

use crate::geometry::{RoadGeometry, Vec2};
use crate::supervision::DenseSupervision;

/// Participant slots per case ("up to five", so exactly five with validity).
pub const SLOTS: usize = 5;

/// How a field arrived: present with content, explicitly unknown, absent, or
/// present but unparseable (raw value retained so serialization round-trips).
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Present,
    Unknown,
    Missing,
    Malformed(serde_json::Value),
}

impl Provenance {
    pub fn is_known(&self) -> bool {
        matches!(self, Provenance::Present)
    }
}

/// A value plus where it came from. `value` holds the unknown-equivalent
/// default whenever provenance is not Present.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub value: T,
    pub prov: Provenance,
}

impl<T> Field<T> {
    pub fn present(value: T) -> Self {
        Field { value, prov: Provenance::Present }
    }

    pub fn unknown(default: T) -> Self {
        Field { value: default, prov: Provenance::Unknown }
    }

    pub fn missing(default: T) -> Self {
        Field { value: default, prov: Provenance::Missing }
    }

    pub fn malformed(default: T, raw: serde_json::Value) -> Self {
        Field { value: default, prov: Provenance::Malformed(raw) }
    }

    pub fn is_known(&self) -> bool {
        self.prov.is_known()
    }
}

macro_rules! report_enum {
    ($name:ident, $count:expr, { $($variant:ident => $s:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant,)+
        }

        impl $name {
            pub const COUNT: usize = $count;
            pub const ALL: [$name; $count] = [$($name::$variant,)+];

            pub fn parse(s: &str) -> Option<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Some($name::$variant),)+
                    _ => None,
                }
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $s,)+
                }
            }

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).unwrap()
            }
        }
    };
}

report_enum!(Lighting, 6, {
    Daylight => "daylight",
    Dark => "dark",
    DarkLighted => "dark-lighted",
    Dawn => "dawn",
    Dusk => "dusk",
    Unknown => "unknown",
});

report_enum!(Weather, 6, {
    Clear => "clear",
    Rain => "rain",
    Snow => "snow",
    Fog => "fog",
    Other => "other",
    Unknown => "unknown",
});

report_enum!(RoadCondition, 5, {
    Dry => "dry",
    Wet => "wet",
    SnowIce => "snow-ice",
    Other => "other",
    Unknown => "unknown",
});

report_enum!(Locality, 4, {
    Urban => "urban",
    Suburban => "suburban",
    Rural => "rural",
    Unknown => "unknown",
});

report_enum!(VehCategory, 8, {
    Passenger => "passenger",
    Suv => "suv",
    Pickup => "pickup",
    Van => "van",
    Truck => "truck",
    Motorcycle => "motorcycle",
    Other => "other",
    Unknown => "unknown",
});

report_enum!(PreMovement, 10, {
    Straight => "straight",
    Curve => "curve",
    TurnLeft => "turn-left",
    TurnRight => "turn-right",
    LaneChange => "lane-change",
    Overtake => "overtake",
    UTurn => "u-turn",
    Stopped => "stopped",
    Other => "other",
    Unknown => "unknown",
});

report_enum!(Avoidance, 7, {
    None => "none",
    Braking => "braking",
    Steering => "steering",
    BrakingAndSteering => "braking-and-steering",
    Accelerating => "accelerating",
    Other => "other",
    Unknown => "unknown",
});

report_enum!(ImpactSide, 5, {
    Front => "front",
    Rear => "rear",
    Left => "left",
    Right => "right",
    Unknown => "unknown",
});

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSemantics {
    pub summary_text: Field<String>,
    pub crash_time: Field<Option<String>>,
    pub lighting: Field<Lighting>,
    pub weather: Field<Weather>,
    pub road_condition: Field<RoadCondition>,
    pub locality: Field<Locality>,
}

impl SceneSemantics {
    pub fn all_unknown() -> Self {
        SceneSemantics {
            summary_text: Field::missing(String::new()),
            crash_time: Field::missing(None),
            lighting: Field::missing(Lighting::Unknown),
            weather: Field::missing(Weather::Unknown),
            road_condition: Field::missing(RoadCondition::Unknown),
            locality: Field::missing(Locality::Unknown),
        }
    }
}

/// One surveyed trajectory point; heading optional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub pos: Vec2<f64>,
    pub theta: Option<f64>,
}

/// One EDR speed record (t seconds relative to impact, v m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdrSample {
    pub t: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSemantics {
    pub slot_index: usize,
    pub valid: bool,
    pub category: Field<VehCategory>,
    pub initial_lane: Field<Option<String>>,
    pub travel_direction: Field<Option<Vec2<f64>>>,
    pub pre_movement: Field<PreMovement>,
    pub avoidance: Field<Avoidance>,
    /// m/s internally; file format may declare mph or ft/s.
    pub speed_limit: Field<Option<f64>>,
}

impl VehicleSemantics {
    pub fn empty(slot_index: usize) -> Self {
        VehicleSemantics {
            slot_index,
            valid: false,
            category: Field::missing(VehCategory::Unknown),
            initial_lane: Field::missing(None),
            travel_direction: Field::missing(None),
            pre_movement: Field::missing(PreMovement::Unknown),
            avoidance: Field::missing(Avoidance::Unknown),
            speed_limit: Field::missing(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactAnnotations {
    pub accident_location: Option<Vec2<f64>>,
    pub collision_pair: Option<(usize, usize)>,
    pub impact_sides: [Field<ImpactSide>; SLOTS],
    pub reported_collision_distance: Option<f64>,
}

impl ImpactAnnotations {
    pub fn empty() -> Self {
        ImpactAnnotations {
            accident_location: None,
            collision_pair: None,
            impact_sides: std::array::from_fn(|_| Field::missing(ImpactSide::Unknown)),
            reported_collision_distance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccidentCase {
    pub case_id: String,
    pub scene: SceneSemantics,
    pub vehicles: [VehicleSemantics; SLOTS],
    pub geometry: RoadGeometry<f64>,
    pub annotations: ImpactAnnotations,
    pub raw_points: [Field<Vec<RawPoint>>; SLOTS],
    pub edr: [Field<Vec<EdrSample>>; SLOTS],
    pub supervision: Option<DenseSupervision>,
}

impl AccidentCase {
    pub fn valid_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..SLOTS).filter(|&i| self.vehicles[i].valid)
    }

    pub fn n_valid(&self) -> usize {
        self.valid_slots().count()
    }
}
