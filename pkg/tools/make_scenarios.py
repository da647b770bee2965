#!/usr/bin/env python3
"""Generate the bundled map and scenario fixtures.

Writes JSON files into src/crossplan/data/.  Lane geometry is built from
circular arcs joined by linear-curvature-ramp spirals, so curvature (and with
it the curvature-limited desired speed) varies continuously along every
enumerated path.  Traces are authored by driving the map's own fitted paths
with a curvature-following speed profile, so the recorded vehicles sit
exactly on enumerable intentions.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from crossplan.topology import build_path_set, parse_map  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "crossplan" / "data"

RING_R = 12.0
DELTA_IN = math.radians(20.0)   # entry merge node offset past the arm axis
DELTA_OUT = math.radians(50.0)  # exit diverge node offset before the arm axis
HOOK_R = 8.0                    # entry hook radius (right turn into the merge)
A_RAMP = 0.8                    # exit ramp: v_des rises as if accelerating
KAPPA_FREE = 0.0078             # at this rate; below this curvature v_des
STRAIGHT_IN = 22.0              # is v_lim anyway
STRAIGHT_OUT = 14.0

# entry hook turns from the radial approach onto the ring tangent
HOOK_TURN = math.pi / 2 - DELTA_IN
# exit spiral: curvature decay along the A_RAMP feasibility boundary,
# truncated once the heading has swung to the radial arm direction
V0SQ = 0.5 * RING_R
EXIT_TURN = math.pi / 2 - DELTA_OUT
L_EXIT = (V0SQ / (2.0 * A_RAMP)) * (math.exp(EXIT_TURN * 4.0 * A_RAMP) - 1.0)

# times at which the circulating vehicles pass the ego's merge node
ROUNDABOUT_T_A = 7.0
ROUNDABOUT_T_B = 10.3

# threeway junction: 90-degree turns ramp curvature up over TURN_RISE meters,
# then decay along the same feasibility boundary as the roundabout exits
TURN_RISE = 6.0
ARM_T = 50.0
THREEWAY_T_TURN = 5.5           # when the turning vehicle is mid-turn


def unit(theta):
    return np.array([math.cos(theta), math.sin(theta)])


def tangent_ccw(theta):
    return np.array([-math.sin(theta), math.cos(theta)])


def rot(v, ang):
    c, s = math.cos(ang), math.sin(ang)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def integrate(start, heading, kappa_fn, length, ds=0.2, backward=False):
    """Trace a curve with prescribed curvature kappa(s); returns the points.

    Forward integration advances along the heading, rotating it by kappa*ds
    per step (positive = left).  Backward integration retraces the same curve
    toward decreasing arc length.
    """
    pos = np.asarray(start, dtype=float).copy()
    hdg = np.asarray(heading, dtype=float).copy()
    pts = [pos.copy()]
    n = int(round(length / ds))
    for i in range(n):
        s_mid = (i + 0.5) * ds
        k = kappa_fn(s_mid)
        if backward:
            hdg = rot(hdg, -k * ds)
            pos = pos - hdg * ds
        else:
            hdg = rot(hdg, k * ds * 0.5)
            pos = pos + hdg * ds
            hdg = rot(hdg, k * ds * 0.5)
        pts.append(pos.copy())
    return np.array(pts), hdg


def thin(pts, step=0.6):
    """Subsample a dense polyline to roughly `step` spacing, keeping ends."""
    out = [pts[0]]
    acc = 0.0
    for i in range(1, len(pts)):
        acc += float(np.linalg.norm(pts[i] - pts[i - 1]))
        if acc >= step or i == len(pts) - 1:
            out.append(pts[i])
            acc = 0.0
    return np.array(out)


def make_roundabout_map():
    arms = {"e": 0.0, "n": math.pi / 2, "w": math.pi, "s": 3 * math.pi / 2}
    nodes = {}
    lanes = {}

    def add_poly(name, pts):
        ids = []
        for i, p in enumerate(pts):
            nid = f"{name}_{i}"
            nodes[nid] = [round(float(p[0]), 4), round(float(p[1]), 4)]
            ids.append(nid)
        return ids

    ring_angles = []
    for a, th in arms.items():
        ring_angles.append(((th - DELTA_OUT) % (2 * math.pi), "exit", a))
        ring_angles.append(((th + DELTA_IN) % (2 * math.pi), "entry", a))
    ring_angles.sort()

    arc_meta = []
    for i, (th0, kind0, arm0) in enumerate(ring_angles):
        th1, kind1, arm1 = ring_angles[(i + 1) % len(ring_angles)]
        t1 = th1 if th1 > th0 else th1 + 2 * math.pi
        n = max(3, int(math.degrees(t1 - th0) / 3.0) + 1)
        pts = np.array([RING_R * unit(t) for t in np.linspace(th0, t1, n)])
        name = f"ring_{i}"
        lanes[name] = {"nodes": add_poly(name, pts), "successors": []}
        arc_meta.append((name, kind1, arm1))

    for i, (name, end_kind, end_arm) in enumerate(arc_meta):
        succ = [arc_meta[(i + 1) % len(arc_meta)][0]]
        if end_kind == "exit":
            succ.append(f"out_{end_arm}")
        lanes[name]["successors"] = succ

    # curvature flips sign where a right-curving connector meets the
    # left-curving ring; a short taper keeps the fitted splines from
    # oscillating around the join
    TAPER = 3.0

    entrances, exits = [], []
    for a, th in arms.items():
        th_entry = (th + DELTA_IN) % (2 * math.pi)
        th_exit = (th - DELTA_OUT) % (2 * math.pi)

        # entry: radial approach, then a right hook onto the merge tangent;
        # traced backward from the node, tapered at both ends
        l_hook = HOOK_TURN * HOOK_R + TAPER

        def hook(s, L=l_hook):
            k = 1.0 / HOOK_R
            return -k * min(1.0, s / TAPER, (L - s) / TAPER)
        spiral, hdg_back = integrate(RING_R * unit(th_entry),
                                     tangent_ccw(th_entry), hook, l_hook,
                                     backward=True)
        tail, _ = integrate(spiral[-1], hdg_back, lambda s: 0.0, STRAIGHT_IN,
                            backward=True)
        pts_in = thin(np.vstack([tail[::-1], spiral[::-1][1:]]))
        name = f"in_{a}"
        first_arc = None
        for i, (th0, kind, arm_id) in enumerate(ring_angles):
            if kind == "entry" and arm_id == a:
                first_arc = f"ring_{i}"
        lanes[name] = {"nodes": add_poly(name, pts_in), "successors": [first_arc]}
        entrances.append(name)

        # exit: right-curving spiral whose curvature decays so that the
        # curvature-limited desired speed rises exactly like a vehicle
        # accelerating at A_RAMP out of the ring; by the time the heading has
        # swung to the radial arm direction the curvature no longer limits
        # speed, and the lane continues straight
        def ramp_out(s):
            k = 0.5 / (V0SQ + 2.0 * A_RAMP * max(s - TAPER, 0.0))
            return -k * min(1.0, s / TAPER)
        # integrate until the accumulated turn reaches EXIT_TURN
        pos = RING_R * unit(th_exit)
        hdg = tangent_ccw(th_exit)
        pts = [pos.copy()]
        turn = 0.0
        s = 0.0
        ds = 0.2
        while turn < EXIT_TURN and s < 200.0:
            k = ramp_out(s + 0.5 * ds)
            hdg = rot(hdg, k * ds * 0.5)
            pos = pos + hdg * ds
            hdg = rot(hdg, k * ds * 0.5)
            pts.append(pos.copy())
            turn += -k * ds
            s += ds
        spiral = np.array(pts)
        tail, _ = integrate(spiral[-1], hdg, lambda s: 0.0, STRAIGHT_OUT)
        pts_out = thin(np.vstack([spiral, tail[1:]]))
        name = f"out_{a}"
        lanes[name] = {"nodes": add_poly(name, pts_out), "successors": []}
        exits.append(name)

    return {"nodes": nodes, "lanes": lanes,
            "entrances": sorted(entrances), "exits": sorted(exits)}


def _solve_turn_peak():
    """Peak curvature of the junction turn.

    The decay after the peak follows the same accelerate-at-A_RAMP
    feasibility boundary as the roundabout exits, truncated where curvature
    stops limiting speed; the peak is solved so the linear rise plus the
    decay integrate to a 90-degree heading change.
    """
    lo, hi = 1.2, 4.0  # bracket on the peak-curvature speed
    for _ in range(80):
        v_pk = 0.5 * (lo + hi)
        k_pk = 0.5 / v_pk**2
        turn = 0.5 * k_pk * TURN_RISE \
            + (0.5 / (2 * A_RAMP)) * math.log(0.5 / KAPPA_FREE / v_pk**2)
        if turn > math.pi / 2:
            lo = v_pk
        else:
            hi = v_pk
    return 0.5 / (0.5 * (lo + hi)) ** 2


TURN_K_PEAK = None  # resolved lazily; depends only on module constants


def _turn_kappa(s, length):
    """Junction turn curvature: quick linear rise, trackable hyperbolic decay."""
    global TURN_K_PEAK
    if TURN_K_PEAK is None:
        TURN_K_PEAK = _solve_turn_peak()
    k_pk = TURN_K_PEAK
    if s < TURN_RISE:
        return k_pk * s / TURN_RISE
    v2 = 0.5 / k_pk + 2.0 * A_RAMP * (s - TURN_RISE)
    k = 0.5 / v2
    return k if k > KAPPA_FREE else 0.0


def turn_length():
    """Arc length of the junction turn (rise plus truncated decay)."""
    global TURN_K_PEAK
    if TURN_K_PEAK is None:
        TURN_K_PEAK = _solve_turn_peak()
    return TURN_RISE + (0.5 / KAPPA_FREE - 0.5 / TURN_K_PEAK) / (2 * A_RAMP)


def junction_turn(start, heading, left, length):
    """90-degree spiral turn; returns (polyline, exact end point)."""
    sign = 1.0 if left else -1.0
    pts, _ = integrate(np.asarray(start, float), np.asarray(heading, float),
                       lambda s: sign * _turn_kappa(s, length), length,
                       ds=0.02)
    return thin(pts, 0.5), pts[-1]


def turn_displacement(length):
    """(along, across) displacement of the canonical left junction turn."""
    pts, _ = integrate(np.zeros(2), np.array([1.0, 0.0]),
                       lambda s: _turn_kappa(s, length), length, ds=0.02)
    return float(pts[-1][0]), float(pts[-1][1])


LANE_OFF = 1.8                  # right-hand lane offset from the road axis


def make_threeway_map():
    """T junction with west, east, and south arms and offset two-lane roads.

    All four turn connectors reuse the same 90-degree spiral; the two left
    turns add a short straight stub (before or after the spiral) so they land
    exactly on the offset exit lanes they feed.
    """
    L0 = turn_length()
    dpar0, dperp0 = turn_displacement(L0)
    of = LANE_OFF

    c_in = dpar0 + of           # where in_w / in_s reach the junction
    c_e = dpar0 - of            # where in_e reaches it (left-turn geometry)
    q_e = of + dperp0           # where out_e / out_s leave it
    q_w = dperp0 - of

    east = np.array([1.0, 0.0])
    west = np.array([-1.0, 0.0])
    north = np.array([0.0, 1.0])

    in_w_end = np.array([-c_in, -of])
    in_e_end = np.array([c_e, of])
    in_s_end = np.array([of, -c_in])
    out_e_start = np.array([q_e, -of])
    out_w_start = np.array([-q_w, of])
    out_s_start = np.array([-of, -q_e])

    def stub(p0, heading, dist, n=8):
        return np.linspace(np.asarray(p0, float),
                           np.asarray(p0, float) + dist * np.asarray(heading, float), n)

    ws_pts, ws_end = junction_turn(in_w_end, east, False, L0)
    se_pts, se_end = junction_turn(in_s_end, north, False, L0)
    es_turn, es_mid = junction_turn(in_e_end, west, True, L0)
    es_pts = np.vstack([es_turn, stub(es_mid, [0.0, -1.0], 2 * of)[1:]])
    es_end = es_pts[-1]
    sw_start = in_s_end + 2 * of * north
    sw_turn, sw_end = junction_turn(sw_start, north, True, L0)
    sw_pts = np.vstack([stub(in_s_end, north, 2 * of), sw_turn[1:]])
    assert np.allclose(ws_end, out_s_start, atol=0.05), (ws_end, out_s_start)
    assert np.allclose(se_end, out_e_start, atol=0.05), (se_end, out_e_start)
    assert np.allclose(es_end, out_s_start, atol=0.05), (es_end, out_s_start)
    assert np.allclose(sw_end, out_w_start, atol=0.05), (sw_end, out_w_start)

    nodes = {}
    lanes = {}

    def add_poly(name, pts):
        ids = []
        for i, q in enumerate(pts):
            nid = f"{name}_{i}"
            nodes[nid] = [round(float(q[0]), 4), round(float(q[1]), 4)]
            ids.append(nid)
        return ids

    def line(p0, p1, n=7):
        return np.linspace(np.asarray(p0, float), np.asarray(p1, float), n)

    specs = {
        "in_w": (line([-ARM_T, -of], in_w_end), ["we", "ws"]),
        "in_e": (line([ARM_T, of], in_e_end), ["ew", "es"]),
        "in_s": (line([of, -ARM_T], in_s_end), ["se", "sw"]),
        "we": (line(in_w_end, out_e_start, 9), ["out_e"]),
        "ew": (line(in_e_end, out_w_start, 9), ["out_w"]),
        "ws": (ws_pts, ["out_s"]),
        "es": (es_pts, ["out_s"]),
        "se": (se_pts, ["out_e"]),
        "sw": (sw_pts, ["out_w"]),
        "out_e": (line(out_e_start, [ARM_T, -of]), []),
        "out_w": (line(out_w_start, [-ARM_T, of]), []),
        "out_s": (line(out_s_start, [-of, -ARM_T]), []),
    }
    for name, (pts, succ) in specs.items():
        lanes[name] = {"nodes": add_poly(name, pts), "successors": succ}
    return {"nodes": nodes, "lanes": lanes,
            "entrances": ["in_e", "in_s", "in_w"],
            "exits": ["out_e", "out_s", "out_w"]}


def make_tjunction_map():
    """Minimal parse-test fixture: 3 entrance lanes, 3 exit lanes."""
    nodes = {
        "tip_n": [0, 30], "mid_n": [0, 6],
        "tip_e": [30, 0], "mid_e": [6, 0],
        "tip_w": [-30, 0], "mid_w": [-6, 0],
    }
    lanes = {
        "in_n": {"nodes": ["tip_n", "mid_n"], "successors": ["out_e", "out_w"]},
        "in_e": {"nodes": ["tip_e", "mid_e"], "successors": ["out_n", "out_w"]},
        "in_w": {"nodes": ["tip_w", "mid_w"], "successors": ["out_n", "out_e"]},
        "out_n": {"nodes": ["mid_n", "tip_n"], "successors": []},
        "out_e": {"nodes": ["mid_e", "tip_e"], "successors": []},
        "out_w": {"nodes": ["mid_w", "tip_w"], "successors": []},
    }
    return {"nodes": nodes, "lanes": lanes,
            "entrances": ["in_e", "in_n", "in_w"],
            "exits": ["out_e", "out_n", "out_w"]}


def make_straight_map():
    return {"nodes": {"a": [0, 0], "b": [150, 0]},
            "lanes": {"main": {"nodes": ["a", "b"], "successors": []}},
            "entrances": ["main"], "exits": ["main"]}


def speed_profile(spline, v0, v_cap, a_acc=1.0, a_brake=2.0, dt=0.05,
                  a_lat_max=0.5):
    """Integrate a curvature-following speed profile along a path.

    The allowed speed at each point is backward-propagated so braking for
    curves starts early enough; returns (times, positions, speeds).
    """
    grid = np.arange(0.0, spline.length, 0.5)
    grid = np.append(grid, spline.length)
    _, _, kappa = spline.eval(grid)
    vdes = np.minimum(np.sqrt(np.maximum(a_lat_max, 1e-12) /
                              np.maximum(kappa, 1e-9)), v_cap)
    allow = vdes.copy()
    for i in range(len(grid) - 2, -1, -1):
        ds = grid[i + 1] - grid[i]
        allow[i] = min(allow[i], math.sqrt(allow[i + 1] ** 2 + 2 * a_brake * ds))
    times, ps, vs = [0.0], [0.0], [min(v0, allow[0])]
    p, v, t = ps[0], vs[0], 0.0
    while p < spline.length - 1e-6 and t < 300.0:
        va = np.interp(p, grid, allow)
        v = min(va, v + a_acc * dt)
        p = min(p + v * dt, spline.length)
        t += dt
        times.append(t)
        ps.append(p)
        vs.append(v)
    return np.array(times), np.array(ps), np.array(vs)


def trace_from_path(pset, route_idx, v0, v_cap, anchor_p, anchor_t,
                    sample_dt=0.25):
    """Drive a path and time-shift so the vehicle passes anchor_p at anchor_t.

    Returns [t, x, y, vx, vy, hx, hy] rows at sample_dt spacing, clipped to
    t >= 0 and ending just before the vehicle reaches its path end, so a
    finished vehicle drops out of the scenario instead of parking at the tip.
    """
    sp = pset.paths[route_idx]
    times, ps, vs = speed_profile(sp, v0, v_cap)
    t_anchor = float(np.interp(anchor_p, ps, times))
    shift = anchor_t - t_anchor
    t_done = float(np.interp(sp.length - 0.4, ps, times))
    out = []
    t = 0.0
    while True:
        tt = t - shift
        if tt < 0:
            p = ps[0]
            v = 0.0 if shift > 0 else vs[0]
        else:
            p = float(np.interp(tt, times, ps))
            v = float(np.interp(tt, times, vs))
        pos, hdg, _ = sp.eval(p)
        out.append([round(t, 4), round(float(pos[0]), 4), round(float(pos[1]), 4),
                    round(float(v * hdg[0]), 4), round(float(v * hdg[1]), 4),
                    round(float(hdg[0]), 6), round(float(hdg[1]), 6)])
        if tt >= t_done:
            break
        t += sample_dt
    return out


def route_index(routes, seq):
    seq = tuple(seq)
    for i, r in enumerate(routes):
        if r == seq:
            return i
    raise KeyError(seq)


def find_route(routes, first, last):
    for r in routes:
        if r[0] == first and r[-1] == last:
            return r
    raise KeyError((first, last))


def main():
    DATA.mkdir(parents=True, exist_ok=True)

    maps = {
        "roundabout_map.json": make_roundabout_map(),
        "threeway_map.json": make_threeway_map(),
        "tjunction_map.json": make_tjunction_map(),
        "straight_map.json": make_straight_map(),
    }
    for fname, m in maps.items():
        (DATA / fname).write_text(json.dumps(m, indent=1, sort_keys=True))
        print("wrote", fname)

    # ---- roundabout scenario -------------------------------------------
    graph = parse_map((DATA / "roundabout_map.json").read_bytes())
    pset, routes = build_path_set(graph, with_routes=True)
    print("roundabout paths:", len(routes))

    ego_route = route_index(routes, find_route(routes, "in_s", "out_e"))
    ego_sp = pset.paths[ego_route]
    merge_xy = RING_R * unit(3 * math.pi / 2 + DELTA_IN)
    p_merge, _ = ego_sp.project(merge_xy)
    print("ego route:", ego_route, "d:", round(ego_sp.length, 1),
          "merge at p:", round(p_merge, 1))

    rA = route_index(routes, find_route(routes, "in_w", "out_e"))
    rB = route_index(routes, find_route(routes, "in_n", "out_e"))
    pA, _ = pset.paths[rA].project(merge_xy)
    pB, _ = pset.paths[rB].project(merge_xy)

    vehA = trace_from_path(pset, rA, v0=6.0, v_cap=6.0, anchor_p=pA,
                           anchor_t=ROUNDABOUT_T_A)
    vehB = trace_from_path(pset, rB, v0=6.0, v_cap=6.0, anchor_p=pB,
                           anchor_t=ROUNDABOUT_T_B)
    print("A trace [%.1f .. %.1f]s  B trace [%.1f .. %.1f]s"
          % (vehA[0][0], vehA[-1][0], vehB[0][0], vehB[-1][0]))

    scenario = {
        "map": "roundabout_map.json",
        "ego": {"path": list(routes[ego_route]), "p0": 0.0, "v0": 8.0,
                "w": 2.0, "l": 4.5},
        "vehicles": [
            {"w": 2.0, "l": 4.5, "samples": vehA},
            {"w": 2.0, "l": 4.5, "samples": vehB},
        ],
        "horizon": 30.0,
    }
    (DATA / "roundabout.json").write_text(json.dumps(scenario, indent=1,
                                                     sort_keys=True))
    print("wrote roundabout.json")

    # ---- threeway scenario ----------------------------------------------
    graph = parse_map((DATA / "threeway_map.json").read_bytes())
    pset, routes = build_path_set(graph, with_routes=True)
    print("threeway paths:", len(routes))

    ego_route = route_index(routes, ("in_s", "se", "out_e"))
    other_route = route_index(routes, ("in_w", "ws", "out_s"))
    # anchor mid-turn early enough that the vehicle visibly commits to
    # turning away before the ego reaches its own turn, while the
    # straight-ahead hypothesis would still have blocked the shared east leg
    in_w_poly = graph.lane_polyline("in_w")
    in_w_len = float(np.sum(np.hypot(*np.diff(in_w_poly, axis=0).T)))
    turn_mid = in_w_len + 0.5 * turn_length()
    veh = trace_from_path(pset, other_route, v0=5.0, v_cap=5.0,
                          anchor_p=turn_mid, anchor_t=THREEWAY_T_TURN)
    print("W-vehicle trace [%.1f .. %.1f]s" % (veh[0][0], veh[-1][0]))
    scenario = {
        "map": "threeway_map.json",
        "ego": {"path": list(routes[ego_route]), "p0": 0.0, "v0": 8.0,
                "w": 2.0, "l": 4.5},
        "vehicles": [{"w": 2.0, "l": 4.5, "samples": veh}],
        "horizon": 26.0,
    }
    (DATA / "threeway.json").write_text(json.dumps(scenario, indent=1,
                                                   sort_keys=True))
    print("wrote threeway.json")

    # ---- straight scenario -----------------------------------------------
    scenario = {
        "map": "straight_map.json",
        "ego": {"path": 0, "p0": 0.0, "v0": 8.0, "w": 2.0, "l": 4.5},
        "vehicles": [],
        "horizon": 25.0,
    }
    (DATA / "straight.json").write_text(json.dumps(scenario, indent=1,
                                                   sort_keys=True))
    print("wrote straight.json")


if __name__ == "__main__":
    main()
