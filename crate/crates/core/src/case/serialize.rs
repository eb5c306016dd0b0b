//! Canonical case serialization. Emits metric units and north-up geometry,
//! preserves provenance (unknown markers survive, malformed content is
//! re-emitted verbatim, missing fields stay absent) so ingest(serialize(c))
//! is a fixed point.

use super::*;
use crate::error::Result;
use crate::geometry::{LanePolygon, Polyline, Vec2};
use serde_json::{json, Map, Value};

fn num(x: f64) -> Value {
    json!(x)
}

fn point(p: Vec2<f64>) -> Value {
    json!([p.x, p.y])
}

fn field<T>(out: &mut Map<String, Value>, key: &str, f: &Field<T>, to_value: impl FnOnce(&T) -> Value) {
    let v = match &f.prov {
        Provenance::Present => to_value(&f.value),
        Provenance::Unknown => Value::String("unknown".into()),
        Provenance::Missing => return,
        Provenance::Malformed(raw) => raw.clone(),
    };
    out.insert(key.to_string(), v);
}

fn polyline(p: &Polyline<f64>) -> Value {
    json!({
        "id": p.id,
        "category": p.category.as_str(),
        "points": p.points.iter().map(|&q| point(q)).collect::<Vec<_>>(),
    })
}

fn polygon(r: &LanePolygon<f64>) -> Value {
    json!({ "ring": r.ring.iter().map(|&q| point(q)).collect::<Vec<_>>() })
}

pub fn serialize_case(case: &AccidentCase) -> Result<String> {
    let mut root = Map::new();
    root.insert("case_id".into(), Value::String(case.case_id.clone()));

    let mut scene = Map::new();
    field(&mut scene, "summary", &case.scene.summary_text, |s| Value::String(s.clone()));
    field(&mut scene, "crash_time", &case.scene.crash_time, |t| match t {
        Some(s) => Value::String(s.clone()),
        None => Value::Null,
    });
    field(&mut scene, "lighting", &case.scene.lighting, |v| Value::String(v.as_str().into()));
    field(&mut scene, "weather", &case.scene.weather, |v| Value::String(v.as_str().into()));
    field(&mut scene, "road_condition", &case.scene.road_condition, |v| Value::String(v.as_str().into()));
    field(&mut scene, "locality", &case.scene.locality, |v| Value::String(v.as_str().into()));
    if !scene.is_empty() {
        root.insert("scene".into(), Value::Object(scene));
    }

    let g = &case.geometry;
    root.insert(
        "geometry".into(),
        json!({
            "frame": "north_up",
            "curves": g.curves.iter().map(polyline).collect::<Vec<_>>(),
            "lane_centerlines": g.lane_centerlines.iter().map(polyline).collect::<Vec<_>>(),
            "lane_polygons": g.lane_polygons.iter().map(polygon).collect::<Vec<_>>(),
        }),
    );

    let mut vehicles = Vec::new();
    for slot in case.valid_slots() {
        let v = &case.vehicles[slot];
        let mut obj = Map::new();
        obj.insert("slot".into(), json!(slot));
        field(&mut obj, "category", &v.category, |c| Value::String(c.as_str().into()));
        field(&mut obj, "initial_lane", &v.initial_lane, |l| match l {
            Some(id) => Value::String(id.clone()),
            None => Value::Null,
        });
        field(&mut obj, "travel_direction", &v.travel_direction, |d| match d {
            Some(u) => point(*u),
            None => Value::Null,
        });
        field(&mut obj, "pre_movement", &v.pre_movement, |p| Value::String(p.as_str().into()));
        field(&mut obj, "avoidance", &v.avoidance, |a| Value::String(a.as_str().into()));
        field(&mut obj, "speed_limit", &v.speed_limit, |s| match s {
            Some(x) => num(*x),
            None => Value::Null,
        });
        field(&mut obj, "survey_points", &case.raw_points[slot], |pts| {
            Value::Array(
                pts.iter()
                    .map(|p| match p.theta {
                        Some(th) => json!([p.pos.x, p.pos.y, th]),
                        None => point(p.pos),
                    })
                    .collect(),
            )
        });
        field(&mut obj, "edr", &case.edr[slot], |samples| {
            Value::Array(samples.iter().map(|s| json!([s.t, s.v])).collect())
        });
        vehicles.push(Value::Object(obj));
    }
    root.insert("vehicles".into(), Value::Array(vehicles));

    let ann = &case.annotations;
    let mut a = Map::new();
    if let Some(p) = ann.accident_location {
        a.insert("accident_location".into(), point(p));
    }
    if let Some((i, j)) = ann.collision_pair {
        a.insert("collision_pair".into(), json!([i, j]));
    }
    let last_side = ann.impact_sides.iter().rposition(|f| !matches!(f.prov, Provenance::Missing));
    if let Some(last) = last_side {
        let sides: Vec<Value> = ann.impact_sides[..=last]
            .iter()
            .map(|f| match &f.prov {
                Provenance::Present => Value::String(f.value.as_str().into()),
                Provenance::Unknown => Value::String("unknown".into()),
                Provenance::Missing => Value::Null,
                Provenance::Malformed(raw) => raw.clone(),
            })
            .collect();
        a.insert("impact_sides".into(), Value::Array(sides));
    }
    if let Some(d) = ann.reported_collision_distance {
        a.insert("collision_distance".into(), num(d));
    }
    if !a.is_empty() {
        root.insert("annotations".into(), Value::Object(a));
    }

    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("case serialization is infallible");
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::super::ingest_case;
    use super::*;

    const SAMPLE: &str = r#"{
        "case_id": "t-001",
        "units": {"length": "ft", "speed": "mph"},
        "scene": {
            "summary": "rear end on a straight segment",
            "lighting": "daylight",
            "weather": "unknown",
            "road_condition": 17
        },
        "geometry": {
            "frame": "world",
            "north_arrow_angle": 0.0,
            "lane_centerlines": [
                {"id": "lane-n", "category": "centerline", "points": [[0,0],[328.084,0]]}
            ]
        },
        "vehicles": [
            {"slot": 0, "category": "passenger-car", "speed_limit": 30.0,
             "initial_lane": "lane-n",
             "travel_direction": [2.0, 0.0],
             "survey_points": [[0,0],[32.8084,0,0.0]],
             "edr": [[-3.0, 20.0], [-1.0, 10.0], [0.0, 0.0]]},
            {"slot": 1, "category": "suv", "avoidance": "braking"}
        ],
        "annotations": {
            "accident_location": [32.8084, 0.0],
            "collision_pair": [0, 1],
            "impact_sides": ["rear", "front"],
            "collision_distance": 15.0
        }
    }"#;

    #[test]
    fn converts_units_on_ingest() {
        let got = ingest_case(SAMPLE).unwrap();
        let c = &got.case;
        // the ft inputs are rounded decimals, so allow conversion slack
        assert!((c.geometry.lane_centerlines[0].points[1].x - 100.0).abs() < 1e-4);
        let lim = c.vehicles[0].speed_limit.value.unwrap();
        assert!((lim - 30.0 * crate::grid::MPH_TO_MPS).abs() < 1e-12);
        assert!((c.raw_points[0].value[1].pos.x - 10.0).abs() < 1e-4);
        let edr = &c.edr[0].value;
        assert!((edr[0].v - 20.0 * crate::grid::MPH_TO_MPS).abs() < 1e-12);
        assert!((c.annotations.reported_collision_distance.unwrap() - 15.0 * crate::grid::FT_TO_M).abs() < 1e-12);
        assert!((c.annotations.accident_location.unwrap().x - 10.0).abs() < 1e-4);
    }

    #[test]
    fn provenance_three_way_split() {
        let got = ingest_case(SAMPLE).unwrap();
        let c = &got.case;
        assert_eq!(c.scene.lighting.prov, Provenance::Present);
        assert_eq!(c.scene.weather.prov, Provenance::Unknown);
        assert!(matches!(c.scene.road_condition.prov, Provenance::Malformed(_)));
        assert_eq!(c.scene.locality.prov, Provenance::Missing);
        assert_eq!(c.vehicles[1].speed_limit.prov, Provenance::Missing);
        // direction normalized to unit length
        let d = c.vehicles[0].travel_direction.value.unwrap();
        assert!((d.norm() - 1.0).abs() < 1e-12 && d.x > 0.99);
    }

    #[test]
    fn ingest_serialize_ingest_is_fixed_point() {
        let first = ingest_case(SAMPLE).unwrap();
        let canon = serialize_case(&first.case).unwrap();
        let second = ingest_case(&canon).unwrap();
        let canon2 = serialize_case(&second.case).unwrap();
        assert_eq!(canon, canon2);
        // malformed content survives the round trip verbatim
        assert!(matches!(second.case.scene.road_condition.prov, Provenance::Malformed(ref v) if v == &serde_json::json!(17)));
    }

    #[test]
    fn invalid_collision_pair_is_a_schema_error() {
        let bad = SAMPLE.replace("\"collision_pair\": [0, 1]", "\"collision_pair\": [0, 4]");
        let err = ingest_case(&bad).unwrap_err();
        assert!(err.to_string().contains("collision_pair"), "{err}");
    }

    #[test]
    fn malformed_edr_keeps_raw_and_empties_value() {
        let bad = SAMPLE.replace("[[-3.0, 20.0], [-1.0, 10.0], [0.0, 0.0]]", "[[-3.0, 20.0], [1.5, 10.0]]");
        let got = ingest_case(&bad).unwrap();
        assert!(matches!(got.case.edr[0].prov, Provenance::Malformed(_)));
        assert!(got.case.edr[0].value.is_empty());
        // and the raw payload survives serialization
        let canon = serialize_case(&got.case).unwrap();
        let again = ingest_case(&canon).unwrap();
        assert!(matches!(again.case.edr[0].prov, Provenance::Malformed(_)));
    }

    #[test]
    fn unresolvable_lane_degrades_to_unknown_with_warning() {
        let bad = SAMPLE.replace("\"initial_lane\": \"lane-n\"", "\"initial_lane\": \"lane-x\"");
        let got = ingest_case(&bad).unwrap();
        assert_eq!(got.case.vehicles[0].initial_lane.prov, Provenance::Unknown);
        assert!(got.warnings.iter().any(|w| w.contains("lane-x")));
    }

    #[test]
    fn rejects_syntactically_broken_json_with_position() {
        let err = ingest_case("{\"case_id\": }").unwrap_err();
        match err {
            crate::Error::Json { line, column, .. } => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected json error, got {other}"),
        }
    }
}
