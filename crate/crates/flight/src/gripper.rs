//! Foam/electromagnet gripper physics.
//!
//! The foam pad is a stiff spring in the limit: compression equals the
//! penetration past contact, saturating at 3 cm. Attachment requires
//! magnets on, contact, and the gripper centered within 5 cm laterally of
//! the brick's ferrous plate.

use crate::dynamics::{BrickKind, MagnetState, UavState, BASE_MASS};

pub const MAX_FOAM_COMPRESSION: f64 = 0.03;
pub const ATTACH_LATERAL_TOL: f64 = 0.05;

/// The brick under the gripper, as the caller's world model sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrickTarget {
    pub kind: BrickKind,
    /// World height of the brick's top face (m).
    pub top_height: f64,
    /// Horizontal distance from gripper axis to the plate center (m).
    pub lateral_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactEvent {
    /// Foam touched down on the brick at the given compression.
    Contact { compression: f64 },
    Attached { kind: BrickKind },
    Released { height: f64 },
}

/// Apply one gripper step: foam contact, magnet latching, release.
/// The gripper face is at the vehicle origin height.
pub fn gripper_step(
    state: &UavState,
    target: Option<&BrickTarget>,
    magnet_cmd: MagnetState,
    _dt: f64,
) -> (UavState, Vec<ContactEvent>) {
    let mut next = state.clone();
    let mut events = Vec::new();
    next.magnets = magnet_cmd;

    let face = next.position.z;
    let contact = target.is_some_and(|b| face <= b.top_height);
    let was_in_contact = state.foam_compression > 0.0;
    next.foam_compression = match (contact, target) {
        (true, Some(b)) => (b.top_height - face).min(MAX_FOAM_COMPRESSION),
        _ => 0.0,
    };
    if contact && !was_in_contact {
        events.push(ContactEvent::Contact {
            compression: next.foam_compression,
        });
    }

    if magnet_cmd == MagnetState::Off {
        if let Some(kind) = next.attached_brick.take() {
            next.mass = BASE_MASS;
            events.push(ContactEvent::Released {
                height: next.position.z,
            });
            let _ = kind;
        }
    } else if next.attached_brick.is_none() {
        if let Some(b) = target {
            if contact && b.lateral_offset.abs() < ATTACH_LATERAL_TOL {
                next.attached_brick = Some(b.kind);
                next.mass = BASE_MASS + b.kind.mass();
                events.push(ContactEvent::Attached { kind: b.kind });
            }
        }
    }

    (next, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GripperPose;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn descended_to(z: f64) -> UavState {
        UavState {
            position: Vector3::new(0.0, 0.0, z),
            gripper: GripperPose::Extended,
            ..UavState::grounded()
        }
    }

    fn red_at(top: f64, offset: f64) -> BrickTarget {
        BrickTarget {
            kind: BrickKind::Red,
            top_height: top,
            lateral_offset: offset,
        }
    }

    #[test]
    fn four_centimeters_past_contact_saturates_the_foam() {
        let brick = red_at(0.2, 0.0);
        let state = descended_to(0.16);
        let (next, events) = gripper_step(&state, Some(&brick), MagnetState::Off, 0.01);
        assert_eq!(next.foam_compression, MAX_FOAM_COMPRESSION);
        assert!(matches!(events[0], ContactEvent::Contact { compression } if compression == 0.03));
    }

    #[test]
    fn ten_centimeter_lateral_offset_blocks_attachment()  {
        let brick = red_at(0.2, 0.10);
        let state = descended_to(0.19);
        let (next, _) = gripper_step(&state, Some(&brick), MagnetState::On, 0.01);
        assert_eq!(next.attached_brick, None);
        assert_eq!(next.mass, BASE_MASS);
    }

    #[test]
    fn aligned_contact_with_magnets_attaches_and_adds_mass() {
        let brick = red_at(0.2, 0.02);
        let state = descended_to(0.19);
        let (next, events) = gripper_step(&state, Some(&brick), MagnetState::On, 0.01);
        assert_eq!(next.attached_brick, Some(BrickKind::Red));
        assert_eq!(next.mass, BASE_MASS + 1.0);
        assert!(events.contains(&ContactEvent::Attached { kind: BrickKind::Red }));
    }

    #[test]
    fn magnets_off_release_at_current_height() {
        let brick = red_at(0.2, 0.0);
        let grasped = gripper_step(&descended_to(0.19), Some(&brick), MagnetState::On, 0.01).0;
        let mut carried = grasped;
        carried.position.z = 1.4;
        let (next, events) = gripper_step(&carried, None, MagnetState::Off, 0.01);
        assert_eq!(next.attached_brick, None);
        assert_eq!(next.mass, BASE_MASS);
        assert!(events.contains(&ContactEvent::Released { height: 1.4 }));
    }

    #[test]
    fn contact_event_fires_once_per_touchdown() {
        let brick = red_at(0.2, 0.0);
        let first = gripper_step(&descended_to(0.19), Some(&brick), MagnetState::Off, 0.01);
        assert_eq!(first.1.len(), 1);
        let again = gripper_step(&first.0, Some(&brick), MagnetState::Off, 0.01);
        assert!(again.1.is_empty());
    }

    proptest! {
        /// Compression only in contact; mass always base + attached mass.
        #[test]
        fn gripper_invariants_hold_over_random_sequences(
            heights in proptest::collection::vec(0.1f64..0.4, 1..40),
            magnets in proptest::collection::vec(proptest::bool::ANY, 1..40),
            offset in 0.0f64..0.12,
        ) {
            let brick = red_at(0.2, offset);
            let mut state = descended_to(0.35);
            for (z, on) in heights.iter().zip(magnets) {
                state.position.z = *z;
                let cmd = if on { MagnetState::On } else { MagnetState::Off };
                let (next, _) = gripper_step(&state, Some(&brick), cmd, 0.01);
                let contact = *z <= brick.top_height;
                prop_assert!(next.foam_compression >= 0.0);
                prop_assert!(next.foam_compression <= MAX_FOAM_COMPRESSION);
                prop_assert!(!(next.foam_compression > 0.0) || contact);
                let expected_mass = BASE_MASS
                    + next.attached_brick.map_or(0.0, BrickKind::mass);
                prop_assert_eq!(next.mass, expected_mass);
                state = next;
            }
        }
    }
}
