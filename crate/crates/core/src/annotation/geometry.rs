//! Region geometry and its literal micro-format:
//!
//! * `rect:x,y,w,h` (pixels)
//! * `poly:x1,y1;x2,y2;x3,y3...` (pixels, at least three distinct vertices)
//! * `box3d:x,y,z,dx,dy,dz` (voxels)

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Geometry {
    Rect {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    Polygon(Vec<(u32, u32)>),
    Box3d {
        x: u32,
        y: u32,
        z: u32,
        dx: u32,
        dy: u32,
        dz: u32,
    },
}

impl Geometry {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Geometry::Rect { width, height, .. } => {
                if *width == 0 || *height == 0 {
                    return Err("rectangle width and height must be positive".into());
                }
            }
            Geometry::Polygon(points) => {
                if points.len() < 3 {
                    return Err("polygon needs at least three vertices".into());
                }
                for (i, p) in points.iter().enumerate() {
                    if points[..i].contains(p) {
                        return Err(format!("polygon vertex {},{} repeats", p.0, p.1));
                    }
                }
            }
            Geometry::Box3d { dx, dy, dz, .. } => {
                if *dx == 0 || *dy == 0 || *dz == 0 {
                    return Err("box extents must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn is_volume(&self) -> bool {
        matches!(self, Geometry::Box3d { .. })
    }

    /// Centre point; 2D shapes report z = 0.
    pub fn centroid(&self) -> [f64; 3] {
        match self {
            Geometry::Rect { x, y, width, height } => [
                f64::from(*x) + f64::from(*width) / 2.0,
                f64::from(*y) + f64::from(*height) / 2.0,
                0.0,
            ],
            Geometry::Polygon(points) => {
                let n = points.len() as f64;
                let sx: f64 = points.iter().map(|p| f64::from(p.0)).sum();
                let sy: f64 = points.iter().map(|p| f64::from(p.1)).sum();
                [sx / n, sy / n, 0.0]
            }
            Geometry::Box3d { x, y, z, dx, dy, dz } => [
                f64::from(*x) + f64::from(*dx) / 2.0,
                f64::from(*y) + f64::from(*dy) / 2.0,
                f64::from(*z) + f64::from(*dz) / 2.0,
            ],
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Rect { x, y, width, height } => write!(f, "rect:{x},{y},{width},{height}"),
            Geometry::Polygon(points) => {
                f.write_str("poly:")?;
                for (i, (x, y)) in points.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{x},{y}")?;
                }
                Ok(())
            }
            Geometry::Box3d { x, y, z, dx, dy, dz } => write!(f, "box3d:{x},{y},{z},{dx},{dy},{dz}"),
        }
    }
}

fn numbers(text: &str, expected: usize) -> Result<Vec<u32>, String> {
    let values: Vec<u32> = text
        .split(',')
        .map(|n| n.trim().parse::<u32>().map_err(|_| format!("{n:?} is not a non-negative integer")))
        .collect::<Result<_, _>>()?;
    if values.len() != expected {
        return Err(format!("expected {expected} numbers, found {}", values.len()));
    }
    Ok(values)
}

impl FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, body) = s.split_once(':').ok_or_else(|| format!("{s:?} lacks a shape prefix"))?;
        let geometry = match kind {
            "rect" => {
                let v = numbers(body, 4)?;
                Geometry::Rect {
                    x: v[0],
                    y: v[1],
                    width: v[2],
                    height: v[3],
                }
            }
            "poly" => Geometry::Polygon(
                body.split(';')
                    .map(|pair| numbers(pair, 2).map(|v| (v[0], v[1])))
                    .collect::<Result<_, _>>()?,
            ),
            "box3d" => {
                let v = numbers(body, 6)?;
                Geometry::Box3d {
                    x: v[0],
                    y: v[1],
                    z: v[2],
                    dx: v[3],
                    dy: v[4],
                    dz: v[5],
                }
            }
            other => return Err(format!("unknown shape {other:?}")),
        };
        geometry.validate()?;
        Ok(geometry)
    }
}

impl TryFrom<String> for Geometry {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Geometry> for String {
    fn from(g: Geometry) -> Self {
        g.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats() {
        let rect: Geometry = "rect:10,10,50,40".parse().unwrap();
        assert_eq!(rect.centroid(), [35.0, 30.0, 0.0]);
        assert!("rect:10,10,0,40".parse::<Geometry>().is_err());
        assert!("poly:1,1;2,2".parse::<Geometry>().is_err());
        assert!("poly:1,1;2,2;1,1".parse::<Geometry>().is_err());
        assert!("circle:1,2,3".parse::<Geometry>().is_err());
        assert!("box3d:1,2,3,4,5".parse::<Geometry>().is_err());
        assert!("box3d:1,2,3,4,5,6".parse::<Geometry>().unwrap().is_volume());
    }

    fn geometry() -> impl Strategy<Value = Geometry> {
        prop_oneof![
            (0u32..1000, 0u32..1000, 1u32..500, 1u32..500).prop_map(|(x, y, width, height)| Geometry::Rect {
                x,
                y,
                width,
                height
            }),
            proptest::collection::btree_set((0u32..100, 0u32..100), 3..8)
                .prop_map(|s| Geometry::Polygon(s.into_iter().collect())),
            (0u32..512, 0u32..512, 0u32..300, 1u32..100, 1u32..100, 1u32..100)
                .prop_map(|(x, y, z, dx, dy, dz)| Geometry::Box3d { x, y, z, dx, dy, dz }),
        ]
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(g in geometry()) {
            prop_assert_eq!(g.to_string().parse::<Geometry>(), Ok(g));
        }
    }
}
