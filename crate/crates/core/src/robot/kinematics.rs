//! Forward kinematics over the fixed-topology link tree.

use alloc::vec::Vec;

use super::ArticulatedRobot;
use crate::math::{Mat3, Pose, UnitQuat, Vec3};

/// World placement of one link for a given configuration.
#[derive(Clone, Copy, Debug)]
pub struct LinkFrame {
    pub pose: Pose,
    pub rot: Mat3,
    /// World position of the link's center of mass.
    pub com: Vec3,
    /// World direction of the joint axis driving this link (zero for the base).
    pub axis: Vec3,
}

impl Default for LinkFrame {
    fn default() -> Self {
        LinkFrame {
            pose: Pose::default(),
            rot: Mat3::IDENTITY,
            com: Vec3::ZERO,
            axis: Vec3::ZERO,
        }
    }
}

/// Fills `out` with one frame per link. `angles` holds one entry per joint.
pub fn forward_kinematics(robot: &ArticulatedRobot, base: &Pose, angles: &[f64], out: &mut Vec<LinkFrame>) {
    out.clear();
    for (i, link) in robot.links.iter().enumerate() {
        let frame = match link.parent {
            None => {
                let rot = base.orientation.to_mat3();
                LinkFrame {
                    pose: *base,
                    rot,
                    com: base.position + rot.mul_vec(link.com),
                    axis: Vec3::ZERO,
                }
            }
            Some(p) => {
                let j = i - 1;
                let joint_frame = out[p].pose.compose(&robot.joint_offsets[j]);
                let axis_local = robot.joints[j].axis;
                let axis = joint_frame.orientation.to_mat3().mul_vec(axis_local);
                let q = joint_frame.orientation * UnitQuat::from_axis_angle(axis_local, angles[j]);
                let pose = Pose::new(joint_frame.position, q);
                let rot = q.to_mat3();
                LinkFrame {
                    pose,
                    rot,
                    com: pose.position + rot.mul_vec(link.com),
                    axis,
                }
            }
        };
        out.push(frame);
    }
}

/// Mass-weighted center of the whole robot.
pub fn center_of_mass(robot: &ArticulatedRobot, frames: &[LinkFrame]) -> Vec3 {
    let mut acc = Vec3::ZERO;
    let mut m = 0.0;
    for (link, f) in robot.links.iter().zip(frames) {
        acc += f.com * link.mass;
        m += link.mass;
    }
    acc / m
}

/// World center of contact sphere `s`.
pub fn sphere_center(robot: &ArticulatedRobot, frames: &[LinkFrame], s: usize) -> Vec3 {
    let sp = &robot.spheres[s];
    frames[sp.link].pose.transform_point(sp.local)
}
