//! Forgiving JSON ingestion. Missing semantic fields become `unknown`;
//! content that does not conform to the expected shape is retained verbatim
//! and marked malformed so missingness statistics can tell the three apart.

use super::*;
use crate::error::{json_error, Error, Result};
use crate::geometry::{
    to_north_up, to_world, Frame, LanePolygon, NorthSource, PolyCategory, Polyline, Rigid, RoadGeometry, Vec2,
};
use crate::grid::{FT_TO_M, MPH_TO_MPS};
use serde_json::{Map, Value};

#[derive(Debug, Clone)]
pub struct Ingested {
    pub case: AccidentCase,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Units {
    length: f64,
    speed: f64,
}

pub fn ingest_case(raw: &str) -> Result<Ingested> {
    let doc: Value = serde_json::from_str(raw).map_err(|e| json_error(raw, &e))?;
    let root = doc
        .as_object()
        .ok_or_else(|| Error::schema("<root>", "case document must be a JSON object"))?;
    let mut warnings = Vec::new();

    let case_id = match root.get("case_id").and_then(Value::as_str) {
        Some(s) if !s.is_empty() => s.to_string(),
        _ => return Err(Error::schema("case_id", "required non-empty string")),
    };

    let units = parse_units(root)?;
    let scene = parse_scene(root.get("scene").and_then(Value::as_object));
    let geometry = parse_geometry(root.get("geometry").and_then(Value::as_object), units, &mut warnings)?;

    let mut vehicles: [VehicleSemantics; SLOTS] = std::array::from_fn(VehicleSemantics::empty);
    let mut raw_points: [Field<Vec<RawPoint>>; SLOTS] = std::array::from_fn(|_| Field::missing(Vec::new()));
    let mut edr: [Field<Vec<EdrSample>>; SLOTS] = std::array::from_fn(|_| Field::missing(Vec::new()));

    if let Some(list) = root.get("vehicles") {
        let list = list
            .as_array()
            .ok_or_else(|| Error::schema("vehicles", "must be an array"))?;
        if list.len() > SLOTS {
            return Err(Error::schema("vehicles", format!("at most {SLOTS} participant slots supported")));
        }
        for (pos, item) in list.iter().enumerate() {
            let obj = item
                .as_object()
                .ok_or_else(|| Error::schema(format!("vehicles[{pos}]"), "must be an object"))?;
            let slot = match obj.get("slot") {
                None => pos,
                Some(v) => v
                    .as_u64()
                    .map(|s| s as usize)
                    .filter(|&s| s < SLOTS)
                    .ok_or_else(|| Error::schema(format!("vehicles[{pos}].slot"), "must be an integer in 0..5"))?,
            };
            if vehicles[slot].valid {
                return Err(Error::schema(format!("vehicles[{pos}].slot"), format!("slot {slot} appears twice")));
            }
            let (veh, rp, ed) = parse_vehicle(slot, obj, units, &geometry, &mut warnings);
            vehicles[slot] = veh;
            raw_points[slot] = rp;
            edr[slot] = ed;
        }
    }

    let annotations = parse_annotations(root.get("annotations").and_then(Value::as_object), units, &vehicles)?;

    let case = AccidentCase {
        case_id,
        scene,
        vehicles,
        geometry,
        annotations,
        raw_points,
        edr,
        supervision: None,
    };
    Ok(Ingested { case, warnings })
}

fn parse_units(root: &Map<String, Value>) -> Result<Units> {
    let mut units = Units { length: 1.0, speed: 1.0 };
    let Some(u) = root.get("units") else {
        return Ok(units);
    };
    let obj = u.as_object().ok_or_else(|| Error::schema("units", "must be an object"))?;
    if let Some(l) = obj.get("length") {
        units.length = match l.as_str() {
            Some("m") => 1.0,
            Some("ft") => FT_TO_M,
            _ => return Err(Error::schema("units.length", "expected \"m\" or \"ft\"")),
        };
    }
    if let Some(s) = obj.get("speed") {
        units.speed = match s.as_str() {
            Some("m/s") => 1.0,
            Some("mph") => MPH_TO_MPS,
            Some("ft/s") => FT_TO_M,
            _ => return Err(Error::schema("units.speed", "expected \"m/s\", \"mph\" or \"ft/s\"")),
        };
    }
    Ok(units)
}

fn is_unknown_marker(v: &Value) -> bool {
    v.as_str().is_some_and(|s| s.eq_ignore_ascii_case("unknown"))
}

/// Shared classification: missing / explicit unknown / parsed / malformed.
fn classify<T>(
    obj: Option<&Map<String, Value>>,
    key: &str,
    default: T,
    parse: impl FnOnce(&Value) -> Option<T>,
) -> Field<T> {
    let Some(v) = obj.and_then(|o| o.get(key)) else {
        return Field::missing(default);
    };
    if v.is_null() {
        return Field::missing(default);
    }
    if is_unknown_marker(v) {
        return Field::unknown(default);
    }
    match parse(v) {
        Some(t) => Field::present(t),
        None => Field::malformed(default, v.clone()),
    }
}

fn enum_field<T: Copy>(
    obj: Option<&Map<String, Value>>,
    key: &str,
    unknown: T,
    parse: impl Fn(&str) -> Option<T>,
) -> Field<T> {
    classify(obj, key, unknown, |v| v.as_str().and_then(&parse))
}

fn parse_scene(obj: Option<&Map<String, Value>>) -> SceneSemantics {
    SceneSemantics {
        summary_text: classify(obj, "summary", String::new(), |v| v.as_str().map(str::to_string)),
        crash_time: classify(obj, "crash_time", None, |v| v.as_str().map(|s| Some(s.to_string()))),
        lighting: enum_field(obj, "lighting", Lighting::Unknown, Lighting::parse),
        weather: enum_field(obj, "weather", Weather::Unknown, Weather::parse),
        road_condition: enum_field(obj, "road_condition", RoadCondition::Unknown, RoadCondition::parse),
        locality: enum_field(obj, "locality", Locality::Unknown, Locality::parse),
    }
}

fn parse_point(v: &Value, scale: f64) -> Option<Vec2<f64>> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    let x = arr[0].as_f64()?;
    let y = arr[1].as_f64()?;
    if !x.is_finite() || !y.is_finite() {
        return None;
    }
    Some(Vec2::new(x * scale, y * scale))
}

fn parse_polyline(v: &Value, scale: f64, fallback_id: String) -> Option<Polyline<f64>> {
    let obj = v.as_object()?;
    let id = obj.get("id").and_then(Value::as_str).map(str::to_string).unwrap_or(fallback_id);
    let category = obj
        .get("category")
        .and_then(Value::as_str)
        .and_then(PolyCategory::parse)
        .unwrap_or(PolyCategory::Other);
    let points: Vec<Vec2<f64>> = obj
        .get("points")?
        .as_array()?
        .iter()
        .map(|p| parse_point(p, scale))
        .collect::<Option<Vec<_>>>()?;
    // salvage coincident points by deduping before validation
    let mut dedup: Vec<Vec2<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if dedup.last().map_or(true, |q: &Vec2<f64>| q.dist(p) > crate::geometry::MIN_POINT_SPACING) {
            dedup.push(p);
        }
    }
    Polyline::new(id, category, dedup).ok()
}

fn parse_geometry(
    obj: Option<&Map<String, Value>>,
    units: Units,
    warnings: &mut Vec<String>,
) -> Result<RoadGeometry<f64>> {
    let Some(obj) = obj else {
        warnings.push("case has no geometry; scene encoding will be masked".into());
        return Ok(RoadGeometry::empty(Frame::NorthUp));
    };

    let frame = match obj.get("frame").and_then(Value::as_str) {
        None => Frame::NorthUp,
        Some("raw") => Frame::Raw,
        Some("world") => Frame::World,
        Some("north_up") => Frame::NorthUp,
        Some(other) => return Err(Error::schema("geometry.frame", format!("unrecognized frame `{other}`"))),
    };

    let mut read_lines = |key: &str| -> Vec<Polyline<f64>> {
        let mut out = Vec::new();
        if let Some(arr) = obj.get(key).and_then(Value::as_array) {
            for (i, item) in arr.iter().enumerate() {
                match parse_polyline(item, units.length, format!("{key}-{i}")) {
                    Some(p) => out.push(p),
                    None => warnings.push(format!("dropped unparseable polyline geometry.{key}[{i}]")),
                }
            }
        }
        out
    };
    let curves = read_lines("curves");
    let lane_centerlines = read_lines("lane_centerlines");

    let mut lane_polygons = Vec::new();
    if let Some(arr) = obj.get("lane_polygons").and_then(Value::as_array) {
        for (i, item) in arr.iter().enumerate() {
            let ring = item
                .as_object()
                .and_then(|o| o.get("ring"))
                .and_then(Value::as_array)
                .and_then(|pts| pts.iter().map(|p| parse_point(p, units.length)).collect::<Option<Vec<_>>>());
            match ring {
                Some(ring) => {
                    let poly = LanePolygon { ring };
                    match poly.validate() {
                        Ok(()) => lane_polygons.push(poly),
                        Err(e) => warnings.push(format!("dropped lane polygon {i}: {e}")),
                    }
                }
                None => warnings.push(format!("dropped unparseable lane polygon {i}")),
            }
        }
    }

    let mut geom = RoadGeometry { curves, lane_centerlines, lane_polygons, frame };
    geom.validate()?;

    // standardize to north-up at ingestion so downstream code sees one frame
    if geom.frame == Frame::Raw {
        let rigid = match obj.get("register").and_then(Value::as_object) {
            Some(r) => {
                let angle = r.get("angle").and_then(Value::as_f64).unwrap_or(0.0);
                let t = r
                    .get("translation")
                    .and_then(|v| parse_point(v, units.length))
                    .unwrap_or(Vec2::zero());
                Rigid { angle, translation: t }
            }
            None => Rigid::identity(),
        };
        geom = to_world(&geom, rigid)?;
    }
    if geom.frame == Frame::World {
        // a surveyed north arrow wins over report metadata
        let (angle, source) = match (
            obj.get("north_arrow_angle").and_then(Value::as_f64),
            obj.get("metadata_north_angle").and_then(Value::as_f64),
        ) {
            (Some(a), _) => (a, NorthSource::NorthArrow),
            (None, Some(a)) => (a, NorthSource::DefaultMetadata),
            (None, None) => (0.0, NorthSource::DefaultMetadata),
        };
        let (g, _) = to_north_up(&geom, angle, source)?;
        geom = g;
    }
    Ok(geom)
}

fn parse_vehicle(
    slot: usize,
    obj: &Map<String, Value>,
    units: Units,
    geometry: &RoadGeometry<f64>,
    warnings: &mut Vec<String>,
) -> (VehicleSemantics, Field<Vec<RawPoint>>, Field<Vec<EdrSample>>) {
    let some = Some(obj);

    let mut initial_lane: Field<Option<String>> =
        classify(some, "initial_lane", None, |v| v.as_str().map(|s| Some(s.to_string())));
    if let (true, Some(id)) = (initial_lane.is_known(), initial_lane.value.clone()) {
        if geometry.lane_index(&id).is_none() {
            warnings.push(format!("vehicle {slot}: initial lane `{id}` not in geometry, degraded to unknown"));
            initial_lane = Field::unknown(None);
        }
    }

    let travel_direction = classify(some, "travel_direction", None, |v| {
        let p = parse_point(v, 1.0)?;
        let u = p.unit(1e-12)?;
        Some(Some(u))
    });

    let speed_limit = classify(some, "speed_limit", None, |v| {
        let x = v.as_f64()?;
        (x.is_finite() && x >= 0.0).then_some(Some(x * units.speed))
    });

    let veh = VehicleSemantics {
        slot_index: slot,
        valid: true,
        category: enum_field(some, "category", VehCategory::Unknown, VehCategory::parse),
        initial_lane,
        travel_direction,
        pre_movement: enum_field(some, "pre_movement", PreMovement::Unknown, PreMovement::parse),
        avoidance: enum_field(some, "avoidance", Avoidance::Unknown, Avoidance::parse),
        speed_limit,
    };

    let raw_points = classify(some, "survey_points", Vec::new(), |v| {
        let arr = v.as_array()?;
        let mut out = Vec::with_capacity(arr.len());
        for item in arr {
            let a = item.as_array()?;
            if a.len() < 2 || a.len() > 3 {
                return None;
            }
            let p = parse_point(item, units.length)?;
            let theta = match a.get(2) {
                Some(t) => Some(t.as_f64().filter(|t| t.is_finite())?),
                None => None,
            };
            out.push(RawPoint { pos: p, theta });
        }
        Some(out)
    });

    let edr = classify(some, "edr", Vec::new(), |v| {
        let arr = v.as_array()?;
        let mut out: Vec<EdrSample> = Vec::with_capacity(arr.len());
        for item in arr {
            let a = item.as_array()?;
            if a.len() != 2 {
                return None;
            }
            let t = a[0].as_f64()?;
            let vel = a[1].as_f64()?;
            if !t.is_finite() || !vel.is_finite() || !(-5.0..=0.0).contains(&t) || vel < 0.0 {
                return None;
            }
            out.push(EdrSample { t, v: vel * units.speed });
        }
        out.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        for w in out.windows(2) {
            if w[0].t >= w[1].t {
                return None; // duplicate timestamps conflict
            }
        }
        Some(out)
    });

    (veh, raw_points, edr)
}

fn parse_annotations(
    obj: Option<&Map<String, Value>>,
    units: Units,
    vehicles: &[VehicleSemantics; SLOTS],
) -> Result<ImpactAnnotations> {
    let mut ann = ImpactAnnotations::empty();
    let Some(obj) = obj else {
        return Ok(ann);
    };

    if let Some(v) = obj.get("accident_location") {
        if !v.is_null() {
            ann.accident_location = Some(
                parse_point(v, units.length)
                    .ok_or_else(|| Error::schema("annotations.accident_location", "expected [x, y]"))?,
            );
        }
    }

    if let Some(v) = obj.get("collision_pair") {
        if !v.is_null() {
            let arr = v
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::schema("annotations.collision_pair", "expected [slot_i, slot_j]"))?;
            let i = arr[0].as_u64().map(|x| x as usize);
            let j = arr[1].as_u64().map(|x| x as usize);
            match (i, j) {
                (Some(i), Some(j)) if i < SLOTS && j < SLOTS && i != j && vehicles[i].valid && vehicles[j].valid => {
                    ann.collision_pair = Some((i, j));
                }
                _ => {
                    return Err(Error::schema(
                        "annotations.collision_pair",
                        "must reference two distinct valid vehicle slots",
                    ))
                }
            }
        }
    }

    if let Some(v) = obj.get("impact_sides") {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::schema("annotations.impact_sides", "expected an array aligned by slot"))?;
        if arr.len() > SLOTS {
            return Err(Error::schema("annotations.impact_sides", format!("at most {SLOTS} entries")));
        }
        for (i, item) in arr.iter().enumerate() {
            ann.impact_sides[i] = if item.is_null() {
                Field::missing(ImpactSide::Unknown)
            } else if is_unknown_marker(item) {
                Field::unknown(ImpactSide::Unknown)
            } else {
                match item.as_str().and_then(ImpactSide::parse) {
                    Some(side) => Field::present(side),
                    None => Field::malformed(ImpactSide::Unknown, item.clone()),
                }
            };
        }
    }

    if let Some(v) = obj.get("collision_distance") {
        if !v.is_null() {
            let d = v
                .as_f64()
                .filter(|d| d.is_finite() && *d >= 0.0)
                .ok_or_else(|| Error::schema("annotations.collision_distance", "expected a non-negative number"))?;
            ann.reported_collision_distance = Some(d * units.length);
        }
    }

    Ok(ann)
}
