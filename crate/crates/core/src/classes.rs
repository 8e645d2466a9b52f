//! Semantic class table. Label 0 is empty space; labels 1..=17 follow the
//! Occ3D category order (with `others` first), shifted up by one.

pub const EMPTY: u8 = 0;
pub const NUM_CLASSES: usize = 17;

pub const CLASS_NAMES: [&str; NUM_CLASSES + 1] = [
    "empty",
    "others",
    "barrier",
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "traffic_cone",
    "trailer",
    "truck",
    "driveable_surface",
    "other_flat",
    "sidewalk",
    "terrain",
    "manmade",
    "vegetation",
];

pub const OTHERS: u8 = 1;
pub const BARRIER: u8 = 2;
pub const BICYCLE: u8 = 3;
pub const BUS: u8 = 4;
pub const CAR: u8 = 5;
pub const CONSTRUCTION_VEHICLE: u8 = 6;
pub const MOTORCYCLE: u8 = 7;
pub const PEDESTRIAN: u8 = 8;
pub const TRAFFIC_CONE: u8 = 9;
pub const TRAILER: u8 = 10;
pub const TRUCK: u8 = 11;
pub const DRIVEABLE_SURFACE: u8 = 12;
pub const OTHER_FLAT: u8 = 13;
pub const SIDEWALK: u8 = 14;
pub const TERRAIN: u8 = 15;
pub const MANMADE: u8 = 16;
pub const VEGETATION: u8 = 17;

/// The ten object categories scored as "dynamic".
pub const DYNAMIC_CLASSES: [u8; 10] = [
    BARRIER,
    BICYCLE,
    BUS,
    CAR,
    CONSTRUCTION_VEHICLE,
    MOTORCYCLE,
    PEDESTRIAN,
    TRAFFIC_CONE,
    TRAILER,
    TRUCK,
];

/// The six background categories scored as "static".
pub const STATIC_CLASSES: [u8; 6] = [DRIVEABLE_SURFACE, OTHER_FLAT, SIDEWALK, TERRAIN, MANMADE, VEGETATION];

/// Default "large object" set for query selection (IoU criterion).
pub const LARGE_OBJECT_CLASSES: [u8; 6] = [BUS, TRUCK, TRAILER, CONSTRUCTION_VEHICLE, CAR, BARRIER];

pub fn name(label: u8) -> &'static str {
    CLASS_NAMES.get(label as usize).copied().unwrap_or("unknown")
}

pub fn from_name(s: &str) -> Option<u8> {
    CLASS_NAMES.iter().position(|n| *n == s).map(|p| p as u8)
}
