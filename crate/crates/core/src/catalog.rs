//! Reference trait catalog of the plant trait study this engine was built
//! for. Metadata only: ids map onto the trait ids used in data files, and
//! nothing in training depends on it.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraitInfo {
    pub id: u32,
    pub name: &'static str,
    /// Observed plants in the reference data set.
    pub entries: u32,
}

const fn t(id: u32, name: &'static str, entries: u32) -> TraitInfo {
    TraitInfo { id, name, entries }
}

pub const TRAITS: [TraitInfo; 17] = [
    t(1, "Specific leaf area (SLA)", 51_848),
    t(2, "Plant height", 49_595),
    t(3, "Seed mass", 96_418),
    t(4, "Leaf dry matter content (LDMC)", 21_609),
    t(5, "Stem specific density (SSD)", 28_571),
    t(6, "Leaf area", 52_266),
    t(7, "Leaf nitrogen (LeafN)", 42_760),
    t(8, "Leaf phosphorus (LeafP)", 20_549),
    t(9, "Stem conduit density", 3_519),
    t(10, "Seed number per reproduction unit", 5_547),
    t(11, "Wood vessel element length", 1_019),
    t(12, "Leaf nitrogen content per area", 14_252),
    t(13, "Leaf fresh mass", 12_131),
    t(14, "Leaf nitrogen phosphorus ratio (LeafN/P)", 12_712),
    t(15, "Leaf carbon content per dry mass", 11_562),
    t(16, "Seed length", 4_647),
    t(17, "Dispersal unit length", 3_021),
];

/// Catalog entry for a trait id as written in data files (`"13"`).
pub fn lookup(trait_id: &str) -> Option<&'static TraitInfo> {
    let id: u32 = trait_id.trim().parse().ok()?;
    TRAITS.iter().find(|t| t.id == id)
}

/// Catalog name, or the id itself for traits outside the catalog.
pub fn display_name(trait_id: &str) -> String {
    lookup(trait_id).map_or_else(|| trait_id.to_string(), |t| t.name.to_string())
}
