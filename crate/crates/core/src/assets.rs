//! Placeable asset catalog.
//!
//! Assets are axis-extent boxes. `extents_m` is `(width, depth, height)` in
//! the asset's canonical orientation: width runs along the asset's local x
//! axis (along the wall for wall-aligned assets), depth along local y.
//!
//! An asset with an empty `room_types` list is eligible in every room type.
//!
//! The dimensions of the starter catalog are editorial: they are plausible
//! furniture and debris sizes, not measurements of any published asset
//! library.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CATALOG_SCHEMA: &str = "clutterbench.catalog/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Anchor,
    SupportingLarge,
    SmallClutter,
    VerticalObstruction,
}

impl Layer {
    /// Placement order.
    pub const ALL: [Layer; 4] =
        [Layer::Anchor, Layer::SupportingLarge, Layer::SmallClutter, Layer::VerticalObstruction];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Anchor => "anchor",
            Layer::SupportingLarge => "supporting_large",
            Layer::SmallClutter => "small_clutter",
            Layer::VerticalObstruction => "vertical_obstruction",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Domestic,
    Debris,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Domestic, Regime::Debris];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Domestic => "domestic",
            Regime::Debris => "debris",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "domestic" => Ok(Regime::Domestic),
            "debris" => Ok(Regime::Debris),
            other => Err(Error::config(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementPrior {
    WallAligned,
    Freestanding,
    Centered,
    OverheadAttach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asset {
    pub id: String,
    pub layer: Layer,
    pub regimes: Vec<Regime>,
    #[serde(default)]
    pub room_types: Vec<String>,
    pub extents_m: [f64; 3],
    pub placement_prior: PlacementPrior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead_clearance_m: Option<f64>,
}

impl Asset {
    pub fn width(&self) -> f64 {
        self.extents_m[0]
    }

    pub fn depth(&self) -> f64 {
        self.extents_m[1]
    }

    pub fn height(&self) -> f64 {
        self.extents_m[2]
    }

    pub fn eligible(&self, layer: Layer, regime: Regime, room_type: &str) -> bool {
        self.layer == layer
            && self.regimes.contains(&regime)
            && (self.room_types.is_empty() || self.room_types.iter().any(|r| r == room_type))
    }
}

/// Floor-plane area of the asset's canonical (unyawed) bounding box.
pub fn footprint_area(asset: &Asset) -> f64 {
    asset.width() * asset.depth()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetCatalog {
    #[serde(default = "catalog_schema")]
    pub schema: String,
    pub version: String,
    pub assets: Vec<Asset>,
}

fn catalog_schema() -> String {
    CATALOG_SCHEMA.to_string()
}

impl AssetCatalog {
    pub fn eligible<'a>(
        &'a self,
        layer: Layer,
        regime: Regime,
        room_type: &'a str,
    ) -> impl Iterator<Item = &'a Asset> + 'a {
        self.assets.iter().filter(move |a| a.eligible(layer, regime, room_type))
    }

    pub fn get(&self, id: &str) -> Option<&Asset> {
        self.assets.iter().find(|a| a.id == id)
    }

    /// Every invariant violation, each prefixed with its JSON path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != CATALOG_SCHEMA {
            out.push(format!("schema: expected {CATALOG_SCHEMA:?}, found {:?}", self.schema));
        }
        let mut seen = HashSet::new();
        for (i, a) in self.assets.iter().enumerate() {
            let at = format!("assets[{i}] ({:?})", a.id);
            if !seen.insert(a.id.as_str()) {
                out.push(format!("{at}.id: duplicate asset id"));
            }
            for (k, e) in a.extents_m.iter().enumerate() {
                if !(*e > 0.0 && e.is_finite()) {
                    out.push(format!("{at}.extents_m[{k}]: must be positive, found {e}"));
                }
            }
            if a.regimes.is_empty() {
                out.push(format!("{at}.regimes: must list at least one regime"));
            }
            if a.layer == Layer::VerticalObstruction && a.regimes != [Regime::Debris] {
                out.push(format!("{at}.regimes: vertical_obstruction assets are debris-only"));
            }
            if a.placement_prior == PlacementPrior::OverheadAttach {
                match a.overhead_clearance_m {
                    Some(c) if c > 0.0 && c.is_finite() => {}
                    Some(c) => out.push(format!("{at}.overhead_clearance_m: must be positive, found {c}")),
                    None => out.push(format!("{at}.overhead_clearance_m: required for overhead_attach placement")),
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("catalog: {}", v.join("; "))))
        }
    }

    /// Documented starter set covering both regimes and the `bedroom`,
    /// `living_room` and `kitchen` room types. Debris assets accept any room
    /// type.
    pub fn starter() -> Self {
        use Layer::*;
        use PlacementPrior::*;
        use Regime::*;

        let mk =
            |id: &str, layer: Layer, regimes: &[Regime], rooms: &[&str], ext: [f64; 3], prior: PlacementPrior| Asset {
                id: id.to_string(),
                layer,
                regimes: regimes.to_vec(),
                room_types: rooms.iter().map(|s| s.to_string()).collect(),
                extents_m: ext,
                placement_prior: prior,
                overhead_clearance_m: if prior == OverheadAttach { Some(0.9) } else { None },
            };
        let dom = &[Domestic][..];
        let deb = &[Debris][..];
        let any: &[&str] = &[];
        let assets = vec![
            // Anchors.
            mk("bed", Anchor, dom, &["bedroom"], [1.6, 2.0, 0.55], WallAligned),
            mk("sofa", Anchor, dom, &["living_room"], [2.0, 0.9, 0.85], WallAligned),
            mk("dining_table", Anchor, dom, &["kitchen"], [1.6, 0.9, 0.75], WallAligned),
            mk("concrete_pillar", Anchor, deb, any, [0.4, 0.4, 2.8], Centered),
            mk("steel_column", Anchor, deb, any, [0.3, 0.3, 2.8], Centered),
            // Supporting large.
            mk("wardrobe", SupportingLarge, dom, &["bedroom"], [1.2, 0.6, 2.0], WallAligned),
            mk("dresser", SupportingLarge, dom, &["bedroom"], [1.0, 0.5, 0.8], WallAligned),
            mk("bookshelf", SupportingLarge, dom, &["bedroom", "living_room"], [0.9, 0.35, 1.8], WallAligned),
            mk("cabinet", SupportingLarge, dom, &["living_room", "kitchen"], [0.8, 0.45, 0.9], WallAligned),
            mk("tv_stand", SupportingLarge, dom, &["living_room"], [1.4, 0.4, 0.5], WallAligned),
            mk("armchair", SupportingLarge, dom, &["bedroom", "living_room"], [0.8, 0.8, 0.9], Freestanding),
            mk("kitchen_counter", SupportingLarge, dom, &["kitchen"], [1.8, 0.6, 0.9], WallAligned),
            mk("fridge", SupportingLarge, dom, &["kitchen"], [0.7, 0.7, 1.8], WallAligned),
            mk("kitchen_island", SupportingLarge, dom, &["kitchen"], [1.2, 0.7, 0.9], Freestanding),
            mk("secondary_pillar", SupportingLarge, deb, any, [0.35, 0.35, 2.8], Freestanding),
            mk("rubble_pile", SupportingLarge, deb, any, [1.2, 1.0, 0.6], Freestanding),
            mk("fallen_slab", SupportingLarge, deb, any, [1.5, 0.8, 0.3], Freestanding),
            // Small clutter.
            mk("chair", SmallClutter, dom, any, [0.45, 0.45, 0.9], Freestanding),
            mk("stool", SmallClutter, dom, any, [0.35, 0.35, 0.45], Freestanding),
            mk("storage_box", SmallClutter, dom, any, [0.4, 0.3, 0.3], Freestanding),
            mk("laundry_basket", SmallClutter, dom, &["bedroom"], [0.45, 0.35, 0.5], Freestanding),
            mk("floor_lamp", SmallClutter, dom, &["bedroom", "living_room"], [0.3, 0.3, 1.6], Freestanding),
            mk("potted_plant", SmallClutter, dom, any, [0.35, 0.35, 0.8], Freestanding),
            mk("side_table", SmallClutter, dom, &["bedroom", "living_room"], [0.45, 0.45, 0.55], Freestanding),
            mk("ottoman", SmallClutter, dom, &["living_room"], [0.5, 0.5, 0.4], Freestanding),
            mk("trash_bin", SmallClutter, dom, &["kitchen"], [0.3, 0.3, 0.6], Freestanding),
            mk("brick_pile", SmallClutter, deb, any, [0.5, 0.4, 0.25], Freestanding),
            mk("concrete_block", SmallClutter, deb, any, [0.4, 0.4, 0.4], Freestanding),
            mk("crate", SmallClutter, deb, any, [0.6, 0.4, 0.4], Freestanding),
            mk("pipe_segment", SmallClutter, deb, any, [1.0, 0.15, 0.15], Freestanding),
            mk("tire", SmallClutter, deb, any, [0.6, 0.6, 0.2], Freestanding),
            // Vertical obstructions.
            mk("i_beam", VerticalObstruction, deb, any, [2.0, 0.2, 0.25], OverheadAttach),
            mk("rebar_bundle", VerticalObstruction, deb, any, [1.8, 0.12, 0.12], OverheadAttach),
            mk("overhead_beam", VerticalObstruction, deb, any, [2.5, 0.3, 0.3], OverheadAttach),
            mk("steel_girder", VerticalObstruction, deb, any, [2.2, 0.25, 0.3], OverheadAttach),
        ];
        AssetCatalog { schema: CATALOG_SCHEMA.to_string(), version: "starter-1".to_string(), assets }
    }
}

/// Mean canonical footprint over assets eligible for `(layer, regime,
/// room_type)`.
pub fn mean_footprint(catalog: &AssetCatalog, layer: Layer, regime: Regime, room_type: &str) -> Result<f64> {
    let (sum, count) =
        catalog.eligible(layer, regime, room_type).fold((0.0, 0usize), |(s, n), a| (s + footprint_area(a), n + 1));
    if count == 0 {
        return Err(Error::config(format!(
            "no eligible assets for (layer={layer}, regime={regime}, room_type={room_type:?})"
        )));
    }
    Ok(sum / count as f64)
}
