//! The modelling feature list and the accident CSV column names.

use serde::{Deserialize, Serialize};

/// How a modelling column is imputed and encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Boolean,
    DayNight,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDef {
    pub name: &'static str,
    pub kind: FeatureKind,
}

const fn def(name: &'static str, kind: FeatureKind) -> FeatureDef {
    FeatureDef { name, kind }
}

pub const DISTANCE: &str = "Distance(mi)";
pub const TURNING_LOOP: &str = "Turning_Loop";

/// The 27 static modelling features in schema order.
pub const MODEL_FEATURES: [FeatureDef; 27] = [
    def(DISTANCE, FeatureKind::Numeric),
    def("Temperature(F)", FeatureKind::Numeric),
    def("Wind_Chill(F)", FeatureKind::Numeric),
    def("Humidity(%)", FeatureKind::Numeric),
    def("Pressure(in)", FeatureKind::Numeric),
    def("Visibility(mi)", FeatureKind::Numeric),
    def("Wind_Direction", FeatureKind::Categorical),
    def("Wind_Speed(mph)", FeatureKind::Numeric),
    def("Precipitation(in)", FeatureKind::Numeric),
    def("Weather_Condition", FeatureKind::Categorical),
    def("Amenity", FeatureKind::Boolean),
    def("Bump", FeatureKind::Boolean),
    def("Crossing", FeatureKind::Boolean),
    def("Give_Way", FeatureKind::Boolean),
    def("Junction", FeatureKind::Boolean),
    def("No_Exit", FeatureKind::Boolean),
    def("Railway", FeatureKind::Boolean),
    def("Roundabout", FeatureKind::Boolean),
    def("Station", FeatureKind::Boolean),
    def("Stop", FeatureKind::Boolean),
    def("Traffic_Calming", FeatureKind::Boolean),
    def("Traffic_Signal", FeatureKind::Boolean),
    def(TURNING_LOOP, FeatureKind::Boolean),
    def("Sunrise_Sunset", FeatureKind::DayNight),
    def("Civil_Twilight", FeatureKind::DayNight),
    def("Nautical_Twilight", FeatureKind::DayNight),
    def("Astronomical_Twilight", FeatureKind::DayNight),
];

pub const POI_COLUMNS: [&str; 13] = [
    "Amenity",
    "Bump",
    "Crossing",
    "Give_Way",
    "Junction",
    "No_Exit",
    "Railway",
    "Roundabout",
    "Station",
    "Stop",
    "Traffic_Calming",
    "Traffic_Signal",
    TURNING_LOOP,
];

pub const TWILIGHT_COLUMNS: [&str; 4] = [
    "Sunrise_Sunset",
    "Civil_Twilight",
    "Nautical_Twilight",
    "Astronomical_Twilight",
];

/// Every column of the accident table, in file order.
pub const ACCIDENT_COLUMNS: [&str; 47] = [
    "ID",
    "Severity",
    "Start_Time",
    "End_Time",
    "Start_Lat",
    "Start_Lng",
    "End_Lat",
    "End_Lng",
    DISTANCE,
    "Description",
    "Number",
    "Street",
    "Side",
    "City",
    "County",
    "State",
    "Zipcode",
    "Country",
    "Timezone",
    "Airport_Code",
    "Weather_Timestamp",
    "Temperature(F)",
    "Wind_Chill(F)",
    "Humidity(%)",
    "Pressure(in)",
    "Visibility(mi)",
    "Wind_Direction",
    "Wind_Speed(mph)",
    "Precipitation(in)",
    "Weather_Condition",
    "Amenity",
    "Bump",
    "Crossing",
    "Give_Way",
    "Junction",
    "No_Exit",
    "Railway",
    "Roundabout",
    "Station",
    "Stop",
    "Traffic_Calming",
    "Traffic_Signal",
    TURNING_LOOP,
    "Sunrise_Sunset",
    "Civil_Twilight",
    "Nautical_Twilight",
    "Astronomical_Twilight",
];

/// Feed identifier column. Present in real exports, not part of the required set.
pub const SOURCE_COLUMN: &str = "Source";

/// Which optional columns to drop from the modelling set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSelection {
    pub drop_turning_loop: bool,
    pub drop_distance: bool,
}

impl FeatureSelection {
    pub fn features(&self) -> Vec<FeatureDef> {
        MODEL_FEATURES
            .iter()
            .copied()
            .filter(|f| !(self.drop_turning_loop && f.name == TURNING_LOOP))
            .filter(|f| !(self.drop_distance && f.name == DISTANCE))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_selection_has_27_unique_columns() {
        let feats = FeatureSelection::default().features();
        assert_eq!(feats.len(), 27);
        let names: HashSet<_> = feats.iter().map(|f| f.name).collect();
        assert_eq!(names.len(), 27);
        for f in &feats {
            assert!(ACCIDENT_COLUMNS.contains(&f.name), "{}", f.name);
        }
    }

    #[test]
    fn drop_flags_shrink_the_list() {
        let sel = FeatureSelection {
            drop_turning_loop: true,
            drop_distance: true,
        };
        let feats = sel.features();
        assert_eq!(feats.len(), 25);
        assert!(feats.iter().all(|f| f.name != TURNING_LOOP && f.name != DISTANCE));
    }
}
