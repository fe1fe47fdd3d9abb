#!/usr/bin/env python3
"""Writes the small text fixtures under tests/data (NTU .skeleton and SBU
skeleton_pos.txt). Output is fully determined by the formulas below."""

import math
import os
import sys

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "data")


def ntu_pose(t, offset, amp):
    joints = []
    for j in range(25):
        x = offset + 0.05 * (j % 5) + amp * math.sin(0.3 * t + 0.2 * j)
        y = 0.1 * (j // 5) - 0.2 + amp * math.cos(0.25 * t + 0.1 * j)
        z = 3.0 + 0.01 * j + 0.5 * amp * math.sin(0.1 * t)
        joints.append((x, y, z))
    return joints


def body_block(body_id, pose):
    lines = ["%s 0 1 1 1 1 0 0.01 -0.02 2" % body_id, "25"]
    for (x, y, z) in pose:
        # xyz, depth xy, colour xy, orientation wxyz, tracking state
        lines.append("%.4f %.4f %.4f 250.5 200.25 1000.5 520.75 0.1 0.2 0.3 0.9 2" % (x, y, z))
    return lines


def write_ntu(path, frames):
    out = [str(frames)]
    for t in range(frames):
        bodies = [("72057594037931101", ntu_pose(t, 0.0, 0.08))]
        if 5 <= t < 30:
            bodies.append(("72057594037931102", ntu_pose(t, 1.0, 0.05)))
        if 10 <= t < 14:
            # brief, nearly still third body; dropped by motion energy
            bodies.append(("72057594037931103", ntu_pose(0, -1.0, 0.001)))
        out.append(str(len(bodies)))
        for body_id, pose in bodies:
            out.extend(body_block(body_id, pose))
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")


def write_sbu(path, frames):
    rows = []
    for t in range(frames):
        vals = [str(t + 1)]
        for s in range(2):
            for j in range(15):
                x = 0.3 + 0.4 * s + 0.02 * j + 0.01 * math.sin(0.4 * t + j)
                y = 0.2 + 0.04 * j + 0.01 * math.cos(0.3 * t + s)
                z = 2.5 + 0.1 * s + 0.005 * j
                vals.extend("%.6f" % v for v in (x, y, z))
        rows.append(",".join(vals))
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")


def main():
    ntu = os.path.join(ROOT, "ntu")
    os.makedirs(ntu, exist_ok=True)
    write_ntu(os.path.join(ntu, "S001C001P001R001A001.skeleton"), 40)
    write_ntu(os.path.join(ntu, "S001C002P003R002A013.skeleton"), 12)
    for pair, action, rep in (("s01s02", 1, 1), ("s01s02", 3, 2), ("s02s03", 8, 1)):
        d = os.path.join(ROOT, "sbu", pair, "%02d" % action, "%03d" % rep)
        os.makedirs(d, exist_ok=True)
        write_sbu(os.path.join(d, "skeleton_pos.txt"), 18 + action)
    return 0


if __name__ == "__main__":
    sys.exit(main())
