"""Smoke test for the rigid_origami extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
Then run:
    python python/smoke_test.py
"""

import math
import sys

import rigid_origami as ro


def check(cond, msg):
    if not cond:
        print(f"FAIL {msg}")
        sys.exit(1)
    print(f"ok   {msg}")


def main():
    cross = ro.Pattern.fixture("fig2_vertex")
    check(cross.num_inner_creases == 4, "fig2 vertex has four inner creases")
    zero = [0.0] * 4
    report = cross.analyze(zero)
    check(report["deg"] == 2 and not report["first_order_rigid"], "flat cross vertex has deg 2")

    s = 1.1
    check(cross.residual([s, 0.0, s, 0.0]) < 1e-10, "cross branch state closes")
    check(cross.residual([-s, 0.0, -s, 0.0]) < 1e-10, "mirrored state closes")

    path = cross.track_flex(zero, [1.0, 0.0, 1.0, 0.0], steps=100)
    rhos = [p["rho"] for p in path["samples"]]
    check(len(rhos) == 101, "track_flex returns 101 samples")
    check(all(cross.residual(r) <= 1e-9 for r in rhos), "every tracked sample closes")

    result = cross.track_to(zero, [1.0, 0.0, 1.0, 0.0])
    check(result["reached"], "track_to reaches a state on the branch")

    corner = ro.Pattern.fixture("cube_corner")
    right = [math.pi / 2] * 3
    check(corner.analyze(right)["first_order_rigid"], "cube corner state is first-order rigid")
    mesh = corner.fold_mesh(right)
    check(len(mesh) == 3 and len(mesh[0][0]) == 3, "fold_mesh returns 3D panel outlines")

    three = ro.Pattern.fixture("three_squares")
    flat = [-math.pi, -math.pi]
    check(ro.is_flat_state(flat), "(-pi, -pi) is a flat state")
    rep = three.check_collisions(flat)
    check(rep["verdict"] == "Ordered", "folded three squares stack without crossing")

    sol = ro.solve_degree3([math.pi / 2] * 3)
    check(sol["case"] == "Isolated" and len(sol["points"]) == 2, "degree-3 closed form gives +-rho")
    case = ro.classify_vertex([math.pi / 2] * 4)
    check(case["cross"], "right-angle degree-4 vertex is a cross")

    gen = ro.Pattern.fixture("quad_grid", 2, 2).generic()
    check(gen["generically_rigid"] and len(gen["packing"]["trees"]) == 6, "2x2 grid packs six trees")

    err = None
    try:
        ro.Pattern.fixture("fig6_lock").compose_forest()
    except ro.OrigamiError as e:
        err = str(e)
    check(err is not None and "not a forest" in err, "two-vertex lock is rejected by compose_forest")

    back = ro.from_normalized(ro.to_normalized([0.3, -2.0, math.pi]))
    check(all(abs(a - b) < 1e-12 for a, b in zip(back, [0.3, -2.0, math.pi])), "normalized angles round trip")

    again = ro.Pattern.from_json(cross.to_json())
    check(again.to_json() == cross.to_json(), "FOLD JSON round trip is exact")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
