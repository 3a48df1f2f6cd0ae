//! Scene description: walls, materials, devices and the RIS panel.
//!
//! A scenario is a flat TOML document, human-editable and diff-friendly.
//! Lengths are metres, powers dBm, frequencies Hz. Unknown keys are rejected.
//!
//! ```toml
//! carrier_hz = 2.4e9
//! noise_dbm = -94.0
//! height_m = 2.7          # recorded only; the engines are 2D
//!
//! [[material]]
//! name = "internal"
//! transmission_loss_db = 5.0
//! reflection_loss_db = 8.0
//!
//! [[wall]]
//! x1 = 0.0
//! y1 = 0.0
//! x2 = 10.0
//! y2 = 0.0
//! material = "internal"
//! thickness_m = 0.1
//!
//! [[tx]]
//! x = 2.0
//! y = 4.5
//! antennas = 4
//! power_dbm = 20.0
//!
//! [[rx]]
//! x = 8.5
//! y = 4.5
//! zone = "protected"      # or "served"
//!
//! [ris]                   # optional
//! x1 = 7.0
//! y1 = 3.2
//! x2 = 7.0
//! y2 = 5.8
//! rows = 4
//! cols = 44
//! absorption_db = 30.0    # optional, default 30
//! ```
//!
//! The RIS element pitch is the mounting-segment length divided by `cols`;
//! validation requires it to equal half the carrier wavelength within 1%,
//! which pins the panel aperture to `cols * lambda / 2`.

use crate::geom::{Point2, Segment};
use crate::{dbm_to_mw, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Relative tolerance on the element pitch vs. half wavelength.
const SPACING_REL_TOL: f64 = 0.01;

/// Wall material: per-crossing and per-bounce losses in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub transmission_loss_db: f64,
    pub reflection_loss_db: f64,
}

/// A thin wall segment. Thickness is recorded metadata; the 2D tracer
/// applies the material's per-crossing loss regardless of thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub segment: Segment,
    pub material: Material,
    pub thickness_m: f64,
}

/// RIS panel mounted along a wall segment. The physical grid is
/// `rows x cols` at half-wavelength pitch; in the 2D plane the columns run
/// along the mounting segment and the rows stack out of plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPanel {
    pub segment: Segment,
    pub rows: usize,
    pub cols: usize,
    pub carrier_hz: f64,
    /// Depth of the absorb state used by the tracer, dB.
    pub absorption_db: f64,
}

impl RisPanel {
    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Element pitch implied by the mounting segment.
    pub fn spacing_m(&self) -> f64 {
        self.segment.length() / self.cols as f64
    }
}

/// Whether a receiver sits in the zone to be denied or the zone to be served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Protected,
    Served,
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Zone::Protected => write!(f, "protected"),
            Zone::Served => write!(f, "served"),
        }
    }
}

/// The multi-antenna transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub position: Point2,
    pub antennas: usize,
    pub power_dbm: f64,
}

/// A single-antenna receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Receiver {
    pub position: Point2,
    pub zone: Zone,
}

/// A validated scene. Immutable after construction; share freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub carrier_hz: f64,
    pub noise_dbm: f64,
    /// Ceiling height, metres. Recorded for provenance, unused in 2D.
    pub height_m: f64,
    pub walls: Vec<Wall>,
    pub ris: Option<RisPanel>,
    pub tx: Transmitter,
    pub receivers: Vec<Receiver>,
}

impl Scenario {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Noise power sigma_n^2 in linear mW.
    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }

    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx.power_dbm)
    }

    /// Axis-aligned bounding box over walls and device positions.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut take = |p: Point2| {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        };
        for w in &self.walls {
            take(w.segment.a);
            take(w.segment.b);
        }
        take(self.tx.position);
        for r in &self.receivers {
            take(r.position);
        }
        if let Some(ris) = &self.ris {
            take(ris.segment.a);
            take(ris.segment.b);
        }
        (min, max)
    }

    /// Receiver indices labelled [`Zone::Protected`].
    pub fn protected_ids(&self) -> Vec<usize> {
        self.receivers
            .iter()
            .enumerate()
            .filter(|(_, r)| r.zone == Zone::Protected)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn served_ids(&self) -> Vec<usize> {
        self.receivers
            .iter()
            .enumerate()
            .filter(|(_, r)| r.zone == Zone::Served)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario not found: {0}")]
    NotFound(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

// ---------------------------------------------------------------------------
// TOML schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    carrier_hz: f64,
    noise_dbm: f64,
    #[serde(default = "default_height")]
    height_m: f64,
    #[serde(default, rename = "material")]
    materials: Vec<Material>,
    #[serde(default, rename = "wall")]
    walls: Vec<WallDoc>,
    #[serde(rename = "tx")]
    txs: Vec<TxDoc>,
    #[serde(default, rename = "rx")]
    rxs: Vec<RxDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ris: Option<RisDoc>,
}

fn default_height() -> f64 {
    2.7
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallDoc {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    material: String,
    thickness_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxDoc {
    x: f64,
    y: f64,
    antennas: usize,
    power_dbm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RxDoc {
    x: f64,
    y: f64,
    zone: Zone,
    /// Accepted so that a violating file produces a validation message
    /// rather than a parse error; must be 1 when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    antennas: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RisDoc {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    rows: usize,
    cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    absorption_db: Option<f64>,
}

/// Default absorb-state depth when the file does not override it, dB.
pub const DEFAULT_RIS_ABSORPTION_DB: f64 = 30.0;

// ---------------------------------------------------------------------------
// Load / save / validate
// ---------------------------------------------------------------------------

/// Load and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(ScenarioError::NotFound(path.display().to_string()));
    }
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_toml_str(&text)
}

/// Parse and validate a scenario from TOML text.
pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut violations = Vec::new();

    if doc.txs.len() != 1 {
        violations.push(format!("exactly one transmitter required, found {}", doc.txs.len()));
    }
    for rx in &doc.rxs {
        if let Some(n) = rx.antennas {
            if n != 1 {
                violations.push(format!("receiver must be single-antenna, found {n}"));
            }
        }
    }

    let mut walls = Vec::with_capacity(doc.walls.len());
    for (i, w) in doc.walls.iter().enumerate() {
        match doc.materials.iter().find(|m| m.name == w.material) {
            Some(m) => walls.push(Wall {
                segment: Segment::new(Point2::new(w.x1, w.y1), Point2::new(w.x2, w.y2)),
                material: m.clone(),
                thickness_m: w.thickness_m,
            }),
            None => violations.push(format!("wall {i}: unknown material '{}'", w.material)),
        }
    }

    let ris = doc.ris.as_ref().map(|r| RisPanel {
        segment: Segment::new(Point2::new(r.x1, r.y1), Point2::new(r.x2, r.y2)),
        rows: r.rows,
        cols: r.cols,
        carrier_hz: doc.carrier_hz,
        absorption_db: r.absorption_db.unwrap_or(DEFAULT_RIS_ABSORPTION_DB),
    });

    let tx = doc.txs.first().map(|t| Transmitter {
        position: Point2::new(t.x, t.y),
        antennas: t.antennas,
        power_dbm: t.power_dbm,
    });

    if !violations.is_empty() {
        return Err(ScenarioError::Validation(violations));
    }
    let scenario = Scenario {
        carrier_hz: doc.carrier_hz,
        noise_dbm: doc.noise_dbm,
        height_m: doc.height_m,
        walls,
        ris,
        tx: tx.expect("validated above"),
        receivers: doc
            .rxs
            .iter()
            .map(|r| Receiver {
                position: Point2::new(r.x, r.y),
                zone: r.zone,
            })
            .collect(),
    };
    let violations = validate(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

/// Serialize a scenario back to TOML. `load` of the output reproduces the
/// scenario field for field.
pub fn to_toml_string(s: &Scenario) -> String {
    let mut materials: Vec<Material> = Vec::new();
    for w in &s.walls {
        if !materials.iter().any(|m| m.name == w.material.name) {
            materials.push(w.material.clone());
        }
    }
    let doc = ScenarioDoc {
        carrier_hz: s.carrier_hz,
        noise_dbm: s.noise_dbm,
        height_m: s.height_m,
        materials,
        walls: s
            .walls
            .iter()
            .map(|w| WallDoc {
                x1: w.segment.a.x,
                y1: w.segment.a.y,
                x2: w.segment.b.x,
                y2: w.segment.b.y,
                material: w.material.name.clone(),
                thickness_m: w.thickness_m,
            })
            .collect(),
        txs: vec![TxDoc {
            x: s.tx.position.x,
            y: s.tx.position.y,
            antennas: s.tx.antennas,
            power_dbm: s.tx.power_dbm,
        }],
        rxs: s
            .receivers
            .iter()
            .map(|r| RxDoc {
                x: r.position.x,
                y: r.position.y,
                zone: r.zone,
                antennas: None,
            })
            .collect(),
        ris: s.ris.as_ref().map(|r| RisDoc {
            x1: r.segment.a.x,
            y1: r.segment.a.y,
            x2: r.segment.b.x,
            y2: r.segment.b.y,
            rows: r.rows,
            cols: r.cols,
            absorption_db: Some(r.absorption_db),
        }),
    };
    toml::to_string_pretty(&doc).expect("scenario serialization cannot fail")
}

/// Write a scenario file.
pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    fs::write(path.as_ref(), to_toml_string(s)).map_err(|source| ScenarioError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Check every scenario invariant; returns one message per violation
/// (empty means valid).
pub fn validate(s: &Scenario) -> Vec<String> {
    let mut v = Vec::new();
    if !(s.carrier_hz > 0.0 && s.carrier_hz.is_finite()) {
        v.push("carrier frequency must be positive".into());
    }
    if !s.noise_dbm.is_finite() {
        v.push("noise power must be finite".into());
    }
    if !s.tx.power_dbm.is_finite() {
        v.push("tx power must be finite".into());
    }
    if s.tx.antennas == 0 {
        v.push("tx must have at least one antenna".into());
    }
    for (i, w) in s.walls.iter().enumerate() {
        if w.segment.length() < 1e-9 {
            v.push(format!("wall {i}: endpoints must be distinct"));
        }
        if !(w.thickness_m > 0.0) {
            v.push(format!("wall {i}: thickness must be positive"));
        }
        if !(w.material.transmission_loss_db >= 0.0 && w.material.transmission_loss_db.is_finite()) {
            v.push(format!("wall {i}: transmission loss must be finite and non-negative"));
        }
        if !(w.material.reflection_loss_db >= 0.0 && w.material.reflection_loss_db.is_finite()) {
            v.push(format!("wall {i}: reflection loss must be finite and non-negative"));
        }
    }
    if let Some(ris) = &s.ris {
        if ris.rows == 0 || ris.cols == 0 {
            v.push("ris grid must have positive rows and cols".into());
        }
        if (ris.carrier_hz - s.carrier_hz).abs() > 1e-6 * s.carrier_hz {
            v.push("ris carrier must match scenario carrier".into());
        }
        if ris.segment.length() < 1e-9 {
            v.push("ris segment endpoints must be distinct".into());
        } else if ris.cols > 0 {
            let half_lambda = s.wavelength_m() / 2.0;
            let spacing = ris.spacing_m();
            if (spacing - half_lambda).abs() > SPACING_REL_TOL * half_lambda {
                v.push(format!(
                    "element spacing must equal half wavelength (got {spacing:.4} m, want {half_lambda:.4} m)"
                ));
            }
        }
        if !(ris.absorption_db >= 0.0 && ris.absorption_db.is_finite()) {
            v.push("ris absorption must be finite and non-negative".into());
        }
    }
    // Receivers must sit inside the built geometry (skipped in free space).
    if !s.walls.is_empty() {
        let (min, max) = s.bounding_box();
        for (i, r) in s.receivers.iter().enumerate() {
            let p = r.position;
            if p.x < min.x || p.x > max.x || p.y < min.y || p.y > max.y {
                v.push(format!("receiver {i}: outside the scenario bounding geometry"));
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Built-in scenes
// ---------------------------------------------------------------------------

/// The 60 m^2 four-room apartment used by the indoor blackout experiments:
/// 10 m x 6 m footprint, 0.41 m external walls, 0.10-0.15 m internal walls,
/// a 2.4 GHz / 20 dBm four-antenna access point in the large room and a RIS
/// panel covering the protected room's internal wall. Door openings are
/// modelled as 0.9 m gaps in the wall segments.
pub fn build_default_apartment() -> Scenario {
    let external = Material {
        name: "external".into(),
        transmission_loss_db: 12.0,
        reflection_loss_db: 8.0,
    };
    let internal = Material {
        name: "internal".into(),
        transmission_loss_db: 5.0,
        reflection_loss_db: 8.0,
    };

    let wall = |x1: f64, y1: f64, x2: f64, y2: f64, m: &Material, t: f64| Wall {
        segment: Segment::new(Point2::new(x1, y1), Point2::new(x2, y2)),
        material: m.clone(),
        thickness_m: t,
    };

    let carrier_hz = 2.4e9;
    // The panel tiles the protected room's wall from the door lintel to the
    // ceiling exactly (aperture = cols * lambda / 2), leaving no uncovered
    // wall strip; the door below it is the only opening.
    let cols = 85usize;
    let rows = 3usize;
    let aperture = cols as f64 * (SPEED_OF_LIGHT / carrier_hz) / 4.0 * 2.0;
    let door_top = 6.0 - aperture; // ~0.69 m door

    let walls = vec![
        // External shell, 41 cm.
        wall(0.0, 0.0, 10.0, 0.0, &external, 0.41),
        wall(10.0, 0.0, 10.0, 6.0, &external, 0.41),
        wall(10.0, 6.0, 0.0, 6.0, &external, 0.41),
        wall(0.0, 6.0, 0.0, 0.0, &external, 0.41),
        // Left partition x = 4, door gap y in (3.8, 4.7) facing the access
        // point, so the baseline signal pours into the right-hand rooms.
        wall(4.0, 0.0, 4.0, 3.8, &internal, 0.10),
        wall(4.0, 4.7, 4.0, 6.0, &internal, 0.10),
        // Middle partition y = 3, door gap x in (5.0, 5.9).
        wall(4.0, 3.0, 5.0, 3.0, &internal, 0.15),
        wall(5.9, 3.0, 7.0, 3.0, &internal, 0.15),
        // Protected-room wall x = 7 with its door at the bottom.
        wall(7.0, door_top, 7.0, 6.0, &internal, 0.10),
    ];

    let ris = RisPanel {
        segment: Segment::new(Point2::new(7.0, door_top), Point2::new(7.0, 6.0)),
        rows,
        cols,
        carrier_hz,
        absorption_db: DEFAULT_RIS_ABSORPTION_DB,
    };

    Scenario {
        carrier_hz,
        noise_dbm: -94.0,
        height_m: 2.7,
        walls,
        ris: Some(ris),
        tx: Transmitter {
            position: Point2::new(1.2, 5.2),
            antennas: 4,
            power_dbm: 20.0,
        },
        receivers: vec![
            Receiver {
                position: Point2::new(8.5, 4.5),
                zone: Zone::Protected,
            },
            Receiver {
                position: Point2::new(9.2, 2.0),
                zone: Zone::Protected,
            },
            Receiver {
                position: Point2::new(1.5, 2.0),
                zone: Zone::Served,
            },
            Receiver {
                position: Point2::new(5.5, 1.5),
                zone: Zone::Served,
            },
        ],
    }
}

/// Interior of the protected (right-hand) room of the default apartment,
/// inset from the walls so cell centres stay clear of wall lines.
pub fn apartment_protected_room() -> (Point2, Point2) {
    (Point2::new(7.15, 0.15), Point2::new(9.85, 5.85))
}

/// Interior of the transmitter's room of the default apartment.
pub fn apartment_tx_room() -> (Point2, Point2) {
    (Point2::new(0.15, 0.15), Point2::new(3.85, 5.85))
}
