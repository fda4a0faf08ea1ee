//! Brick catalogue.

use skyhook_perception::BrickClass;

/// Physical and visual description of one brick type.
#[derive(Debug, Clone, PartialEq)]
pub struct BrickSpec {
    pub class: BrickClass,
    /// Width, depth, length in metres.
    pub dims_m: [f64; 3],
    pub mass_kg: f64,
    /// Base paint colour, linear RGB in [0, 1].
    pub color: [f32; 3],
}

/// Ferromagnetic patch colour shared by all bricks.
pub const PATCH_COLOR: [f32; 3] = [0.93, 0.84, 0.12];

pub fn brick_spec(class: BrickClass) -> BrickSpec {
    let (dims_m, mass_kg, color) = match class {
        BrickClass::Red => ([0.2, 0.2, 0.3], 1.0, [0.78, 0.12, 0.10]),
        BrickClass::Green => ([0.2, 0.2, 0.6], 1.0, [0.10, 0.62, 0.18]),
        BrickClass::Blue => ([0.2, 0.2, 1.2], 1.5, [0.12, 0.25, 0.70]),
        BrickClass::Orange => ([0.2, 0.2, 2.0], 2.0, [0.92, 0.45, 0.08]),
    };
    BrickSpec {
        class,
        dims_m,
        mass_kg,
        color,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_dimensions_and_masses() {
        let red = brick_spec(BrickClass::Red);
        assert_eq!(red.dims_m, [0.2, 0.2, 0.3]);
        assert_eq!(red.mass_kg, 1.0);
        assert_eq!(brick_spec(BrickClass::Green).dims_m[2], 0.6);
        assert_eq!(brick_spec(BrickClass::Green).mass_kg, 1.0);
        assert_eq!(brick_spec(BrickClass::Blue).dims_m[2], 1.2);
        assert_eq!(brick_spec(BrickClass::Blue).mass_kg, 1.5);
        assert_eq!(brick_spec(BrickClass::Orange).dims_m[2], 2.0);
        assert_eq!(brick_spec(BrickClass::Orange).mass_kg, 2.0);
    }

    #[test]
    fn colors_are_distinct() {
        let all: Vec<_> = BrickClass::ALL.iter().map(|&c| brick_spec(c).color).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
