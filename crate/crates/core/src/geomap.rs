//! GPS interpolation and GeoJSON damage pins.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantify::{RiskLevel, RiskScore};
use crate::segment::DamageClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsSample {
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamagePin {
    pub lat: f64,
    pub lon: f64,
    pub class: DamageClass,
    pub level: RiskLevel,
    pub frame: usize,
    pub risk: f64,
}

/// Marker colour of a risk band on the map.
pub fn marker_color(level: RiskLevel) -> &'static str {
    match level {
        RiskLevel::Low => "green",
        RiskLevel::Medium => "blue",
        RiskLevel::High => "red",
    }
}

fn validate_track(track: &[GpsSample]) -> Result<()> {
    if track.len() < 2 {
        return Err(Error::Data(format!(
            "GPS track needs at least 2 samples, got {}",
            track.len()
        )));
    }
    for (i, s) in track.iter().enumerate() {
        if !(s.lat.abs() <= 90.0 && s.lon.abs() <= 180.0 && s.timestamp.is_finite()) {
            return Err(Error::Data(format!("GPS sample {i} out of range: {s:?}")));
        }
        if i > 0 && !(s.timestamp > track[i - 1].timestamp) {
            return Err(Error::Data(format!(
                "GPS timestamps not strictly increasing at sample {i}"
            )));
        }
    }
    Ok(())
}

/// Per-frame `(lat, lon)` by linear interpolation in degrees; times outside
/// the track take the nearest endpoint.
pub fn interpolate_track(track: &[GpsSample], frame_times: &[f64]) -> Result<Vec<(f64, f64)>> {
    validate_track(track)?;
    let first = track[0];
    let last = track[track.len() - 1];
    frame_times
        .iter()
        .map(|&t| {
            if !t.is_finite() {
                return Err(Error::Data(format!("frame time {t} is not finite")));
            }
            if t <= first.timestamp {
                return Ok((first.lat, first.lon));
            }
            if t >= last.timestamp {
                return Ok((last.lat, last.lon));
            }
            // First sample strictly after t; t lies in [prev, next).
            let j = track.partition_point(|s| s.timestamp <= t);
            let (p, n) = (track[j - 1], track[j]);
            if t == p.timestamp {
                return Ok((p.lat, p.lon));
            }
            let f = (t - p.timestamp) / (n.timestamp - p.timestamp);
            Ok((p.lat + f * (n.lat - p.lat), p.lon + f * (n.lon - p.lon)))
        })
        .collect()
}

/// One pin per damage, placed at its frame's camera position.
/// `coords[i]` is the position of frame `i`.
pub fn make_pins(damages: &[(usize, DamageClass, RiskScore)], coords: &[(f64, f64)]) -> Result<Vec<DamagePin>> {
    damages
        .iter()
        .map(|&(frame, class, score)| {
            let &(lat, lon) = coords
                .get(frame)
                .ok_or_else(|| Error::Data(format!("no GPS coordinate for frame {frame}")))?;
            Ok(DamagePin {
                lat,
                lon,
                class,
                level: score.level,
                frame,
                risk: score.value,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: Point,
    properties: Properties,
}

#[derive(Serialize, Deserialize)]
struct Point {
    #[serde(rename = "type")]
    kind: String,
    coordinates: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct Properties {
    class: DamageClass,
    risk: f64,
    level: RiskLevel,
    frame: usize,
    #[serde(rename = "marker-color")]
    marker_color: String,
}

/// RFC 7946 FeatureCollection of point pins, coordinates `[lon, lat]`.
pub fn export_geojson(pins: &[DamagePin]) -> String {
    let doc = FeatureCollection {
        kind: "FeatureCollection".into(),
        features: pins
            .iter()
            .map(|p| Feature {
                kind: "Feature".into(),
                geometry: Point {
                    kind: "Point".into(),
                    coordinates: [p.lon, p.lat],
                },
                properties: Properties {
                    class: p.class,
                    risk: p.risk,
                    level: p.level,
                    frame: p.frame,
                    marker_color: marker_color(p.level).into(),
                },
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("pins serialise");
    text.push('\n');
    text
}

/// Parses a document written by [`export_geojson`].
pub fn parse_geojson(text: &str) -> Result<Vec<DamagePin>> {
    let doc: FeatureCollection = serde_json::from_str(text).map_err(|e| Error::Data(format!("GeoJSON: {e}")))?;
    if doc.kind != "FeatureCollection" {
        return Err(Error::Data(format!("GeoJSON type `{}`", doc.kind)));
    }
    Ok(doc
        .features
        .into_iter()
        .map(|f| DamagePin {
            lon: f.geometry.coordinates[0],
            lat: f.geometry.coordinates[1],
            class: f.properties.class,
            level: f.properties.level,
            frame: f.properties.frame,
            risk: f.properties.risk,
        })
        .collect())
}

/// Reads a `timestamp,lat,lon` CSV track (header required).
pub fn read_gps_csv<R: Read>(reader: R) -> Result<Vec<GpsSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("GPS CSV: {e}")))?.clone();
    for col in ["timestamp", "lat", "lon"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Data(format!("GPS CSV lacks a `{col}` column")));
        }
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Data(format!("GPS CSV record {i}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn track() -> Vec<GpsSample> {
        vec![
            GpsSample {
                timestamp: 0.0,
                lat: 52.0,
                lon: 4.0,
            },
            GpsSample {
                timestamp: 2.0,
                lat: 52.002,
                lon: 4.004,
            },
            GpsSample {
                timestamp: 3.0,
                lat: 52.003,
                lon: 4.0,
            },
        ]
    }

    #[test]
    fn interpolation_examples() {
        let got = interpolate_track(&track(), &[-1.0, 0.0, 1.0, 2.0, 2.5, 9.0]).unwrap();
        assert_eq!(got[0], (52.0, 4.0));
        assert_eq!(got[1], (52.0, 4.0));
        assert!((got[2].0 - 52.001).abs() < 1e-12 && (got[2].1 - 4.002).abs() < 1e-12);
        assert_eq!(got[3], (52.002, 4.004));
        assert!((got[4].0 - 52.0025).abs() < 1e-12 && (got[4].1 - 4.002).abs() < 1e-12);
        assert_eq!(got[5], (52.003, 4.0));
    }

    #[test]
    fn bad_tracks() {
        assert!(interpolate_track(&track()[..1], &[0.0]).is_err());
        let mut t = track();
        t[2].timestamp = 2.0;
        assert!(interpolate_track(&t, &[0.0]).is_err());
        let mut t = track();
        t[0].lat = 91.0;
        assert!(interpolate_track(&t, &[0.0]).is_err());
    }

    fn score(level: RiskLevel) -> RiskScore {
        RiskScore { value: 1.0, level }
    }

    #[test]
    fn pins() {
        assert!(make_pins(&[], &[]).unwrap().is_empty());
        let coords = vec![(1.0, 2.0); 11];
        let damages: Vec<_> = (0..3)
            .map(|_| (0, DamageClass::Pothole, score(RiskLevel::Low)))
            .collect();
        let pins = make_pins(&damages, &coords).unwrap();
        assert_eq!(pins.len(), 3);
        assert!(pins.iter().all(|p| (p.lat, p.lon) == (1.0, 2.0)));
        assert!(make_pins(&[(11, DamageClass::Pothole, score(RiskLevel::Low))], &coords).is_err());
    }

    #[test]
    fn geojson_examples() {
        let empty: serde_json::Value = serde_json::from_str(&export_geojson(&[])).unwrap();
        assert_eq!(empty["type"], "FeatureCollection");
        assert_eq!(empty["features"].as_array().unwrap().len(), 0);

        let pin = DamagePin {
            lat: 52.1,
            lon: 4.3,
            class: DamageClass::AlligatorCrack,
            level: RiskLevel::High,
            frame: 4,
            risk: 2.5,
        };
        let v: serde_json::Value = serde_json::from_str(&export_geojson(&[pin])).unwrap();
        let f = &v["features"][0];
        assert_eq!(f["properties"]["marker-color"], "red");
        assert_eq!(f["properties"]["level"], "High");
        assert_eq!(f["geometry"]["coordinates"][0], 4.3);
        assert_eq!(marker_color(RiskLevel::Low), "green");
        assert_eq!(marker_color(RiskLevel::Medium), "blue");
    }

    #[test]
    fn csv_track() {
        let text = "timestamp,lat,lon\n0.0,52.0,4.0\n1.5, 52.1 ,4.1\n";
        let t = read_gps_csv(text.as_bytes()).unwrap();
        assert_eq!(
            t[1],
            GpsSample {
                timestamp: 1.5,
                lat: 52.1,
                lon: 4.1
            }
        );
        assert!(read_gps_csv("time,lat,lon\n0,1,2\n".as_bytes()).is_err());
        assert!(read_gps_csv("timestamp,lat,lon\n0,x,2\n".as_bytes()).is_err());
    }

    fn level_of(i: u8) -> RiskLevel {
        [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High][i as usize % 3]
    }

    proptest! {
        #[test]
        fn geojson_round_trip(raw in proptest::collection::vec((-90.0f64..90.0, -180.0f64..180.0, 0u8..3, 0usize..100, 0.0f64..50.0), 0..20)) {
            let pins: Vec<DamagePin> = raw.iter().map(|&(lat, lon, l, frame, risk)| DamagePin {
                lat, lon, class: DamageClass::ALL[frame % 4], level: level_of(l), frame, risk,
            }).collect();
            let back = parse_geojson(&export_geojson(&pins)).unwrap();
            prop_assert_eq!(back, pins);
        }

        #[test]
        fn interpolation_stays_in_bracket(t in -1.0f64..4.0) {
            let tr = track();
            let (lat, lon) = interpolate_track(&tr, &[t]).unwrap()[0];
            let seg = tr.windows(2).find(|w| t >= w[0].timestamp && t <= w[1].timestamp);
            if let Some(w) = seg {
                let (a, b) = (w[0], w[1]);
                prop_assert!(lat >= a.lat.min(b.lat) - 1e-12 && lat <= a.lat.max(b.lat) + 1e-12);
                prop_assert!(lon >= a.lon.min(b.lon) - 1e-12 && lon <= a.lon.max(b.lon) + 1e-12);
            }
        }
    }
}
