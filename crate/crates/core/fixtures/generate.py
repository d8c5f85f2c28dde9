"""Regenerates the bundled model fixtures.

    python3 generate.py

Writes gsp.json (6-UPS Gough-Stewart platform) and planar_3rrr.json
(2-DOF planar 3-RRR). Geometry and inertia values are synthetic.

Every intermediate body frame coincides with the world frame in the home
configuration (theta = 0), and the terminal body frame of each limb is the
platform frame. Home is therefore a closed configuration for both fixtures.
"""

import json
import math
import re
from pathlib import Path

import numpy as np


def hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def revolute(axis, point):
    w = np.asarray(axis, float)
    w = w / np.linalg.norm(w)
    q = np.asarray(point, float)
    return np.concatenate([w, np.cross(q, w)])


def prismatic(direction):
    d = np.asarray(direction, float)
    return np.concatenate([np.zeros(3), d / np.linalg.norm(d)])


def adjoint(rot, trans):
    ad = np.zeros((6, 6))
    ad[:3, :3] = rot
    ad[3:, :3] = hat(trans) @ rot
    ad[3:, 3:] = rot
    return ad


def inverse_pose(rot, trans):
    return rot.T, -rot.T @ trans


def mass_matrix(mass, com, inertia_com):
    """6x6 mass matrix (angular-first) about a frame with the COM at `com`."""
    c = hat(np.asarray(com, float))
    m = np.zeros((6, 6))
    m[:3, :3] = np.asarray(inertia_com, float) - mass * c @ c
    m[:3, 3:] = mass * c
    m[3:, :3] = -mass * c
    m[3:, 3:] = mass * np.eye(3)
    return 0.5 * (m + m.T)


def rod_inertia(mass, length, radius, axis):
    """Inertia of a solid cylinder about its COM, long axis along `axis`."""
    a = np.asarray(axis, float)
    a = a / np.linalg.norm(a)
    i_ax = 0.5 * mass * radius**2
    i_tr = mass * (3 * radius**2 + length**2) / 12.0
    return i_tr * np.eye(3) + (i_ax - i_tr) * np.outer(a, a)


def identity_pose():
    return {"rotation": np.eye(3).tolist(), "translation": [0.0, 0.0, 0.0]}


def pose(rot, trans):
    return {"rotation": np.asarray(rot).tolist(), "translation": np.asarray(trans).tolist()}


ZERO6 = np.zeros((6, 6)).tolist()


def gsp():
    base_r, plat_r = 0.30, 0.18
    home_height = 0.40
    base_angles = [a + s for a in (0.0, 120.0, 240.0) for s in (-10.0, 10.0)]
    plat_angles = [a + s for a in (60.0, 180.0, 300.0) for s in (-12.0, 12.0)]
    # pair each base anchor with the closest platform anchor of the neighbouring pair
    plat_order = [5, 0, 1, 2, 3, 4]
    p_home = np.array([0.0, 0.0, home_height])
    c_p_rot, c_p_trans = np.eye(3), p_home
    inv_rot, inv_trans = inverse_pose(c_p_rot, c_p_trans)
    ad_p_inv = adjoint(inv_rot, inv_trans)

    platform_mass = mass_matrix(4.0, [0.0, 0.0, 0.02], np.diag([0.040, 0.040, 0.070]))
    limbs = []
    for k in range(6):
        ab = math.radians(base_angles[k])
        ap = math.radians(plat_angles[plat_order[k]])
        a = np.array([base_r * math.cos(ab), base_r * math.sin(ab), 0.0])
        b = np.array([plat_r * math.cos(ap), plat_r * math.sin(ap), 0.0])
        q = c_p_trans + c_p_rot @ b
        d = (q - a) / np.linalg.norm(q - a)
        u1 = np.cross(d, [0.0, 0.0, 1.0])
        u1 /= np.linalg.norm(u1)
        u2 = np.cross(d, u1)
        screws = [
            revolute(u1, a),
            revolute(u2, a),
            prismatic(d),
            revolute(d, q),
            revolute(u1, q),
            ad_p_inv @ revolute(u2, q),
        ]
        joints = []
        for i, x in enumerate(screws):
            ref = pose(c_p_rot, c_p_trans) if i == 5 else identity_pose()
            joint = {"screw": x.tolist(), "ref_config": ref}
            if i == 2:
                joint["limits"] = [-0.15, 0.15]
            joints.append(joint)
        leg_len = np.linalg.norm(q - a)
        cylinder = mass_matrix(1.2, a + 0.12 * d, rod_inertia(1.2, 0.24, 0.025, d))
        piston = mass_matrix(0.8, q - 0.12 * d, rod_inertia(0.8, 0.24, 0.015, d))
        bodies = [ZERO6, cylinder.tolist(), piston.tolist()]
        last = k == 5
        if last:
            bodies += [ZERO6, ZERO6, platform_mass.tolist()]
        limbs.append(
            {
                "joints": joints,
                "bodies": [{"mass_matrix": m} for m in bodies],
                "P_t": np.eye(6).tolist(),
                "D_t": np.eye(6).tolist(),
                "cut_joint_rows": [] if last else [3, 4, 5],
                "actuated_joint": 2,
            }
        )
        assert leg_len > 0.3
    return {
        "dof": 6,
        "gravity": [0.0, 0.0, -9.81],
        "P_p": np.eye(6).tolist(),
        "sea": {"stiffness": [5.0e4] * 6, "motor_inertia": [2.0] * 6},
        "limbs": limbs,
    }


def planar():
    base_r = 0.35
    l1, l2 = 0.22, 0.22
    anchors = [90.0, 210.0, 330.0]
    ee = np.array([0.0, 0.0, 0.0])
    z = [0.0, 0.0, 1.0]
    p_p = np.zeros((6, 2))
    p_p[3, 0] = 1.0
    p_p[4, 1] = 1.0
    rows = [2, 3, 4]
    p_t = np.zeros((3, 6))
    for r, c in enumerate(rows):
        p_t[r, c] = 1.0
    d_t = p_t @ p_p
    platform_mass = mass_matrix(0.3, [0.0, 0.0, 0.0], np.diag([1.0e-4, 1.0e-4, 2.0e-4]))
    limbs = []
    for k, ang in enumerate(anchors):
        t = math.radians(ang)
        a = np.array([base_r * math.cos(t), base_r * math.sin(t), 0.0])
        # elbow on the left of the base->EE direction
        dist = np.linalg.norm(ee - a)
        along = (dist**2 + l1**2 - l2**2) / (2 * dist)
        off = math.sqrt(l1**2 - along**2)
        u = (ee - a) / dist
        n = np.array([-u[1], u[0], 0.0])
        e = a + along * u + off * n
        screws = [revolute(z, a), revolute(z, e), revolute(z, [0.0, 0.0, 0.0])]
        joints = []
        for i, x in enumerate(screws):
            ref = pose(np.eye(3), ee) if i == 2 else identity_pose()
            joints.append({"screw": x.tolist(), "ref_config": ref})
        link1_axis = (e - a) / np.linalg.norm(e - a)
        link2_axis = (ee - e) / np.linalg.norm(ee - e)
        link1 = mass_matrix(0.5, 0.5 * (a + e), rod_inertia(0.5, l1, 0.01, link1_axis))
        link2 = mass_matrix(0.4, 0.5 * (e + ee), rod_inertia(0.4, l2, 0.01, link2_axis))
        last = k == 2
        bodies = [link1.tolist(), link2.tolist()]
        if last:
            bodies.append(platform_mass.tolist())
        limbs.append(
            {
                "joints": joints,
                "bodies": [{"mass_matrix": m} for m in bodies],
                "P_t": p_t.tolist(),
                "D_t": d_t.tolist(),
                "cut_joint_rows": [] if last else [2],
                "actuated_joint": 0,
            }
        )
    return {
        "dof": 2,
        "gravity": [0.0, -9.81, 0.0],
        "P_p": p_p.tolist(),
        "sea": {"stiffness": [50.0] * 3, "motor_inertia": [0.01] * 3},
        "limbs": limbs,
    }


if __name__ == "__main__":
    here = Path(__file__).parent
    for name, doc in (("gsp.json", gsp()), ("planar_3rrr.json", planar())):
        text = json.dumps(doc, indent=1)
        # keep numeric rows on a single line
        text = re.sub(r"\[\s*([-0-9.e+,\s]+?)\s*\]", lambda m: "[" + ", ".join(m.group(1).split()).replace(",,", ",") + "]", text)
        (here / name).write_text(text + "\n")
