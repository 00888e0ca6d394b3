//! Static-API style rules and location query templates.
//!
//! The embedded default rules are the complete tactile style: they recolor
//! the six feature classes to their palette colors and switch every label,
//! icon, and transit element off. `compile_style` serializes them into the
//! `style` request parameters, byte-stable and order-preserving.

use super::DatasetError;

/// One style rule: a feature selector, an element selector, and either a
/// `color:0xRRGGBB` or a `visibility:off` specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyleRule {
    pub feature: String,
    pub element: String,
    pub specification: String,
}

impl StyleRule {
    pub fn new(feature: &str, element: &str, specification: &str) -> Self {
        StyleRule {
            feature: feature.to_string(),
            element: element.to_string(),
            specification: specification.to_string(),
        }
    }
}

/// The embedded tactile style, all 26 rows.
pub fn default_style_rules() -> Vec<StyleRule> {
    const ROWS: [(&str, &str, &str); 26] = [
        ("all", "all", "color:0xffffff"),
        ("administrative", "labels", "visibility:off"),
        ("landscape", "all", "color:0x000000"),
        ("landscape", "labels", "visibility:off"),
        ("landscape.man_made", "all", "color:0x00ffff"),
        ("landscape.man_made", "geometry.fill", "color:0xffffff"),
        ("landscape.man_made.building", "geometry.fill", "color:0x00ffff"),
        ("landscape.natural", "all", "color:0xffffff"),
        ("poi", "labels", "visibility:off"),
        ("poi", "geometry.fill", "color:0x00ff00"),
        ("poi.medical", "geometry.fill", "color:0x808080"),
        ("poi.place_of_worship", "geometry.fill", "visibility:off"),
        ("poi.school", "geometry.fill", "visibility:off"),
        ("road", "labels", "visibility:off"),
        ("road.highway", "all", "color:0xffff00"),
        ("road.highway", "geometry.fill", "color:0xffff00"),
        ("road.highway.controlled_access", "geometry.fill", "color:0xffff00"),
        ("road.arterial", "all", "color:0xff00ff"),
        ("road.arterial", "geometry.fill", "color:0xff00ff"),
        ("road.local", "all", "color:0xff00ff"),
        ("road.local", "geometry.fill", "color:0xff00ff"),
        ("transit", "all", "visibility:off"),
        ("transit", "labels", "visibility:off"),
        ("water", "all", "color:0x0000ff"),
        ("water", "geometry.fill", "color:0x0000ff"),
        ("water", "labels", "visibility:off"),
    ];
    ROWS.iter()
        .map(|&(f, e, s)| StyleRule::new(f, e, s))
        .collect()
}

fn validate_spec(spec: &str) -> Result<(), DatasetError> {
    if spec == "visibility:off" {
        return Ok(());
    }
    if let Some(hex) = spec.strip_prefix("color:0x") {
        if hex.len() == 6 && hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Ok(());
        }
    }
    Err(DatasetError::BadStyleSpec(spec.to_string()))
}

/// Serialize rules into request parameter strings, one per rule, in order:
/// `feature:<f>|element:<e>|<spec>`.
pub fn compile_style(rules: &[StyleRule]) -> Result<Vec<String>, DatasetError> {
    rules
        .iter()
        .map(|rule| {
            validate_spec(&rule.specification)?;
            Ok(format!(
                "feature:{}|element:{}|{}",
                rule.feature, rule.element, rule.specification
            ))
        })
        .collect()
}

/// A location query in one of the four supported templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocationQuery {
    /// `<City>, <Province/State>, <Country>`
    City {
        city: String,
        region: String,
        country: String,
    },
    /// UK cities use `<City>, <Country>, UK`.
    UkCity { city: String, country: String },
    /// `<Landmark Name>, <City/State>, <Country>`
    Landmark {
        name: String,
        city_or_state: String,
        country: String,
    },
    /// `<Institution Name>, <Country>`
    University { name: String, country: String },
    /// `<Hospital Name>, <Address>, <City>, <State>, USA`
    Hospital {
        name: String,
        address: String,
        city: String,
        state: String,
    },
}

fn require(part: &str, what: &'static str) -> Result<(), DatasetError> {
    if part.trim().is_empty() {
        Err(DatasetError::EmptyQueryPart(what))
    } else {
        Ok(())
    }
}

/// Render a query into the comma-joined center string for the request.
pub fn build_query(query: &LocationQuery) -> Result<String, DatasetError> {
    match query {
        LocationQuery::City {
            city,
            region,
            country,
        } => {
            require(city, "city")?;
            require(region, "province/state")?;
            require(country, "country")?;
            Ok(format!("{city}, {region}, {country}"))
        }
        LocationQuery::UkCity { city, country } => {
            require(city, "city")?;
            require(country, "country")?;
            Ok(format!("{city}, {country}, UK"))
        }
        LocationQuery::Landmark {
            name,
            city_or_state,
            country,
        } => {
            require(name, "landmark name")?;
            require(city_or_state, "city/state")?;
            require(country, "country")?;
            Ok(format!("{name}, {city_or_state}, {country}"))
        }
        LocationQuery::University { name, country } => {
            require(name, "institution name")?;
            require(country, "country")?;
            Ok(format!("{name}, {country}"))
        }
        LocationQuery::Hospital {
            name,
            address,
            city,
            state,
        } => {
            require(name, "hospital name")?;
            require(address, "address")?;
            require(city, "city")?;
            require(state, "state")?;
            Ok(format!("{name}, {address}, {city}, {state}, USA"))
        }
    }
}
