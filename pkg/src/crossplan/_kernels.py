"""Numba-compiled numeric kernels shared by the geometry, domain, and belief code.

Paths are packed into flat arrays so every kernel stays allocation-free:

* ``knots``  : all paths' arc-length breakpoints, concatenated
* ``koff``   : int64[m+1] knot offsets, path ``mu`` owns ``knots[koff[mu]:koff[mu+1]]``
* ``cx, cy`` : cubic coefficients, 4 per segment (highest power first), concatenated
             in segment order; path ``mu``'s segments start at ``koff[mu] - mu``
* ``dtot``   : float64[m] total path lengths

Joint vehicle states are float64 arrays of shape (n_vehicles, 3) holding
``[p, v, mu]`` per row, ego in row 0.  Parameter vectors use the ``P_*``
index constants below.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Layout of the float64 parameter vector used by the domain kernels.
P_DT = 0
P_TAU = 1
P_DELTA = 2
P_DMIN = 3
P_AMAX = 4
P_AMIN = 5
P_SIGMA_IDM = 6
P_OTHER_VCAP = 7
P_RVEL = 8
P_RACC = 9
P_RCRASH = 10
P_ALATMAX = 11
P_VLIM = 12
P_POS_SD = 13
P_VEL_SD = 14
P_HEAD_SD = 15
P_KEY_POS_BIN = 16
P_KEY_SPEED_BIN = 17
P_QP_SD = 18
P_QV_SD = 19
P_LEAD_LAT = 20
P_LEAD_AHEAD = 21
P_LEAD_FLOOR = 22
P_LOOKAHEAD = 23
P_GAMMA = 24
N_PARAMS = 25

TERM_NONE = 0
TERM_GOAL = 1
TERM_CRASH = 2


# ---------------------------------------------------------------------------
# Spline evaluation and projection
# ---------------------------------------------------------------------------

@njit(cache=True)
def _segment_index(knots, lo, hi, p):
    """Index of the segment containing p within knots[lo:hi], local to lo."""
    n = hi - lo
    if p <= knots[lo]:
        return 0
    if p >= knots[hi - 1]:
        return n - 2
    a, b = 0, n - 1
    while b - a > 1:
        mid = (a + b) // 2
        if knots[lo + mid] <= p:
            a = mid
        else:
            b = mid
    return a


@njit(cache=True)
def eval_path(knots, koff, cx, cy, mu, p):
    """Position and first two derivatives of path mu at clamped arc position p.

    Returns (x, y, dx, dy, ddx, ddy).
    """
    lo = koff[mu]
    hi = koff[mu + 1]
    d = knots[hi - 1]
    if p < 0.0:
        p = 0.0
    elif p > d:
        p = d
    seg = _segment_index(knots, lo, hi, p)
    g = (lo - mu + seg) * 4  # global coefficient offset for this segment
    t = p - knots[lo + seg]
    a3, a2, a1, a0 = cx[g], cx[g + 1], cx[g + 2], cx[g + 3]
    b3, b2, b1, b0 = cy[g], cy[g + 1], cy[g + 2], cy[g + 3]
    x = ((a3 * t + a2) * t + a1) * t + a0
    y = ((b3 * t + b2) * t + b1) * t + b0
    dx = (3.0 * a3 * t + 2.0 * a2) * t + a1
    dy = (3.0 * b3 * t + 2.0 * b2) * t + b1
    ddx = 6.0 * a3 * t + 2.0 * a2
    ddy = 6.0 * b3 * t + 2.0 * b2
    return x, y, dx, dy, ddx, ddy


@njit(cache=True)
def eval_pose(knots, koff, cx, cy, mu, p):
    """Position, unit heading, and unsigned curvature at p. Returns (x, y, hx, hy, kappa)."""
    x, y, dx, dy, ddx, ddy = eval_path(knots, koff, cx, cy, mu, p)
    speed2 = dx * dx + dy * dy
    speed = math.sqrt(speed2)
    if speed < 1e-12:
        return x, y, 1.0, 0.0, 0.0
    kappa = abs(dx * ddy - dy * ddx) / (speed2 * speed)
    return x, y, dx / speed, dy / speed, kappa


@njit(cache=True)
def eval_many(knots, koff, cx, cy, mu, ps, out):
    """Fill out[i] = (x, y, hx, hy, kappa) for each arc position in ps."""
    for i in range(ps.shape[0]):
        x, y, hx, hy, k = eval_pose(knots, koff, cx, cy, mu, ps[i])
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = hx
        out[i, 3] = hy
        out[i, 4] = k


@njit(cache=True)
def _dist2_at(knots, koff, cx, cy, mu, p, qx, qy):
    x, y, dx, dy, ddx, ddy = eval_path(knots, koff, cx, cy, mu, p)
    return (x - qx) * (x - qx) + (y - qy) * (y - qy)


@njit(cache=True)
def project_point(knots, koff, cx, cy, samp_x, samp_y, samp_p, poff, mu, qx, qy):
    """Nearest arc position on path mu to the query point (qx, qy).

    Coarse scan over the precomputed 1 m sample table, then golden-section
    refinement on the bracketing interval.  Returns (p, distance).
    """
    lo = poff[mu]
    hi = poff[mu + 1]
    best = lo
    bestd = 1e300
    for i in range(lo, hi):
        ddx = samp_x[i] - qx
        ddy = samp_y[i] - qy
        d2 = ddx * ddx + ddy * ddy
        if d2 < bestd:
            bestd = d2
            best = i
    d = knots[koff[mu + 1] - 1]
    step = 1.0
    a = samp_p[best] - step
    b = samp_p[best] + step
    if a < 0.0:
        a = 0.0
    if b > d:
        b = d
    # golden-section search on the squared distance
    invphi = 0.6180339887498949
    c1 = b - (b - a) * invphi
    c2 = a + (b - a) * invphi
    f1 = _dist2_at(knots, koff, cx, cy, mu, c1, qx, qy)
    f2 = _dist2_at(knots, koff, cx, cy, mu, c2, qx, qy)
    while b - a > 1e-7:
        if f1 < f2:
            b = c2
            c2 = c1
            f2 = f1
            c1 = b - (b - a) * invphi
            f1 = _dist2_at(knots, koff, cx, cy, mu, c1, qx, qy)
        else:
            a = c1
            c1 = c2
            f1 = f2
            c2 = a + (b - a) * invphi
            f2 = _dist2_at(knots, koff, cx, cy, mu, c2, qx, qy)
    p = 0.5 * (a + b)
    d2 = _dist2_at(knots, koff, cx, cy, mu, p, qx, qy)
    return p, math.sqrt(d2)


# ---------------------------------------------------------------------------
# Point-mass dynamics and IDM
# ---------------------------------------------------------------------------

@njit(cache=True)
def step_kinematics(p, v, a, dt, d_total, qp, qv, noise_p, noise_v):
    """One constant-acceleration step with stop-at-zero, noise, and clamping."""
    v2 = v + a * dt
    if v2 < 0.0:
        # vehicle stops inside the step; hold position from the stop time on
        if a < 0.0:
            p2 = p + 0.5 * v * v / (-a)
        else:
            p2 = p
        v2 = 0.0
    else:
        p2 = p + v * dt + 0.5 * a * dt * dt
    p2 += qp * noise_p
    v2 += qv * noise_v
    if v2 < 0.0:
        v2 = 0.0
    if p2 < 0.0:
        p2 = 0.0
    elif p2 > d_total:
        p2 = d_total
    return p2, v2


@njit(cache=True)
def idm_rho(v, v_des, v_lead, d_lead, has_leader, tau, delta, d_min, a_max, a_min):
    """IDM demand factor; the caller scales by a_max and adds noise."""
    if v_des < 0.1:
        v_des = 0.1
    rho = 1.0 - (v / v_des) ** delta
    if has_leader:
        dstar = d_min + v * tau + v * (v - v_lead) / (2.0 * math.sqrt(a_max * abs(a_min)))
        rho -= (dstar / d_lead) * (dstar / d_lead)
    return rho


@njit(cache=True)
def find_leader(states, geoms, idx, knots, koff, cx, cy,
                lt_p, lt_lat, ltoff, lstep, lat_max, ahead_max, gap_floor):
    """Nearest vehicle ahead of `idx` along its path.

    Cross-path relations come from the precomputed projection tables
    ``lt_p``/``lt_lat`` (grid step ``lstep`` along the target path).
    Returns (found, v_lead, d_lead).
    """
    n = states.shape[0]
    m = koff.shape[0] - 1
    mu_i = int(states[idx, 2])
    p_i = states[idx, 0]
    best_ahead = 1e300
    v_lead = 0.0
    gap = 0.0
    found = False
    for j in range(n):
        if j == idx:
            continue
        mu_j = int(states[j, 2])
        p_j = states[j, 0]
        if mu_i == mu_j:
            p_on = p_j
            lat = 0.0
        else:
            base = ltoff[mu_i * m + mu_j]
            hi = ltoff[mu_i * m + mu_j + 1]
            npts = hi - base
            g = p_j / lstep
            gi = int(g)
            if gi < 0:
                gi = 0
            if gi >= npts - 1:
                gi = npts - 2
            frac = g - gi
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            p_on = lt_p[base + gi] * (1.0 - frac) + lt_p[base + gi + 1] * frac
            lat = lt_lat[base + gi] * (1.0 - frac) + lt_lat[base + gi + 1] * frac
        ahead = p_on - p_i
        if lat < lat_max and ahead > 0.0 and ahead <= ahead_max and ahead < best_ahead:
            best_ahead = ahead
            g2 = ahead - 0.5 * geoms[idx, 1] - 0.5 * geoms[j, 1]
            if g2 < gap_floor:
                g2 = gap_floor
            gap = g2
            v_lead = states[j, 1]
            found = True
    return found, v_lead, gap


@njit(cache=True)
def transition(states, geoms, ego_a, params, dtot,
               knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
               noise, out):
    """Propagate all vehicles one step: ego with ego_a, others with noisy IDM.

    ``noise`` holds n standard normals for the IDM terms followed by
    2*(n+1) for the process noise (p, v per vehicle).
    """
    n_all = states.shape[0]
    n_oth = n_all - 1
    dt = params[P_DT]
    qp = params[P_QP_SD]
    qv = params[P_QV_SD]
    for i in range(n_all):
        mu = int(states[i, 2])
        if i == 0:
            u = ego_a
        else:
            x, y, hx, hy, kappa = eval_pose(knots, koff, cx, cy, mu, states[i, 0])
            if kappa > 1e-9:
                v_des = math.sqrt(params[P_ALATMAX] / kappa)
            else:
                v_des = params[P_OTHER_VCAP]
            if v_des > params[P_OTHER_VCAP]:
                v_des = params[P_OTHER_VCAP]
            has, v_lead, d_lead = find_leader(
                states, geoms, i, knots, koff, cx, cy,
                lt_p, lt_lat, ltoff, lstep,
                params[P_LEAD_LAT], params[P_LEAD_AHEAD], params[P_LEAD_FLOOR])
            rho = idm_rho(states[i, 1], v_des, v_lead, d_lead, has,
                          params[P_TAU], params[P_DELTA], params[P_DMIN],
                          params[P_AMAX], params[P_AMIN])
            u = params[P_AMAX] * rho + params[P_SIGMA_IDM] * noise[i - 1]
            if u < params[P_AMIN]:
                u = params[P_AMIN]
            elif u > params[P_AMAX]:
                u = params[P_AMAX]
        p2, v2 = step_kinematics(states[i, 0], states[i, 1], u, dt, dtot[mu],
                                 qp, qv, noise[n_oth + 2 * i], noise[n_oth + 2 * i + 1])
        out[i, 0] = p2
        out[i, 1] = v2
        out[i, 2] = states[i, 2]


@njit(cache=True)
def observe(states, params, knots, koff, cx, cy, noise, out):
    """Map path states to global measurements with Gaussian noise.

    ``noise`` holds 6 standard normals per vehicle; ``out`` has shape (n, 6)
    with rows [x, y, vx, vy, hx, hy].
    """
    n = states.shape[0]
    for i in range(n):
        mu = int(states[i, 2])
        x, y, hx, hy, kappa = eval_pose(knots, koff, cx, cy, mu, states[i, 0])
        v = states[i, 1]
        b = 6 * i
        out[i, 0] = x + params[P_POS_SD] * noise[b]
        out[i, 1] = y + params[P_POS_SD] * noise[b + 1]
        out[i, 2] = v * hx + params[P_VEL_SD] * noise[b + 2]
        out[i, 3] = v * hy + params[P_VEL_SD] * noise[b + 3]
        out[i, 4] = hx + params[P_HEAD_SD] * noise[b + 4]
        out[i, 5] = hy + params[P_HEAD_SD] * noise[b + 5]


LOG_2PI = 1.8378770664093453


@njit(cache=True)
def log_likelihood(obs, states, params, knots, koff, cx, cy):
    """Log density of an observation given a joint state.

    Position and velocity blocks always contribute; the heading block only
    when its configured variance is nonzero.
    """
    n = states.shape[0]
    pv = params[P_POS_SD] * params[P_POS_SD]
    vv = params[P_VEL_SD] * params[P_VEL_SD]
    hv = params[P_HEAD_SD] * params[P_HEAD_SD]
    total = 0.0
    for i in range(n):
        mu = int(states[i, 2])
        x, y, hx, hy, kappa = eval_pose(knots, koff, cx, cy, mu, states[i, 0])
        v = states[i, 1]
        rx = obs[i, 0] - x
        ry = obs[i, 1] - y
        total += -0.5 * (rx * rx + ry * ry) / pv - (LOG_2PI + math.log(pv))
        rvx = obs[i, 2] - v * hx
        rvy = obs[i, 3] - v * hy
        total += -0.5 * (rvx * rvx + rvy * rvy) / vv - (LOG_2PI + math.log(vv))
        if hv > 0.0:
            rhx = obs[i, 4] - hx
            rhy = obs[i, 5] - hy
            total += -0.5 * (rhx * rhx + rhy * rhy) / hv - (LOG_2PI + math.log(hv))
    return total


@njit(cache=True)
def observation_key(obs, pos_bin, speed_bin, out):
    """Quantize the other vehicles' observations into int64 bins, 3 each.

    The ego row is skipped: the ego knows its own state, so branching on its
    self-measurement noise would only dilute episodes across identical
    futures.  out[0] stays fixed at 0.
    """
    n = obs.shape[0]
    out[0] = 0
    out[1] = 0
    out[2] = 0
    for i in range(1, n):
        out[3 * i] = int(math.floor(obs[i, 0] / pos_bin + 0.5))
        out[3 * i + 1] = int(math.floor(obs[i, 1] / pos_bin + 0.5))
        speed = math.hypot(obs[i, 2], obs[i, 3])
        out[3 * i + 2] = int(math.floor(speed / speed_bin + 0.5))


# ---------------------------------------------------------------------------
# Collision, reward, terminal
# ---------------------------------------------------------------------------

@njit(cache=True)
def rect_overlap(c1x, c1y, a1x, a1y, l1, w1, c2x, c2y, a2x, a2y, l2, w2):
    """Separating-axis overlap test for two oriented rectangles.

    Axes are unit heading vectors; l is the extent along the axis, w across.
    Touching rectangles count as overlapping.
    """
    dx = c2x - c1x
    dy = c2y - c1y
    hl1 = 0.5 * l1
    hw1 = 0.5 * w1
    hl2 = 0.5 * l2
    hw2 = 0.5 * w2
    # candidate axes: heading and normal of each rectangle
    for k in range(4):
        if k == 0:
            ax, ay = a1x, a1y
        elif k == 1:
            ax, ay = -a1y, a1x
        elif k == 2:
            ax, ay = a2x, a2y
        else:
            ax, ay = -a2y, a2x
        r1 = hl1 * abs(a1x * ax + a1y * ay) + hw1 * abs(-a1y * ax + a1x * ay)
        r2 = hl2 * abs(a2x * ax + a2y * ay) + hw2 * abs(-a2y * ax + a2x * ay)
        if abs(dx * ax + dy * ay) > r1 + r2:
            return False
    return True


@njit(cache=True)
def ego_collision(states, geoms, knots, koff, cx, cy):
    """True iff the ego rectangle overlaps any other vehicle's rectangle."""
    n = states.shape[0]
    mu0 = int(states[0, 2])
    x0, y0, hx0, hy0, k0 = eval_pose(knots, koff, cx, cy, mu0, states[0, 0])
    for j in range(1, n):
        mu = int(states[j, 2])
        x, y, hx, hy, k = eval_pose(knots, koff, cx, cy, mu, states[j, 0])
        if rect_overlap(x0, y0, hx0, hy0, geoms[0, 1], geoms[0, 0],
                        x, y, hx, hy, geoms[j, 1], geoms[j, 0]):
            return True
    return False


@njit(cache=True)
def desired_velocity(kappa, a_lat_max, v_lim):
    if kappa > 1e-9:
        v = math.sqrt(a_lat_max / kappa)
        if v < v_lim:
            return v
    return v_lim


@njit(cache=True)
def reward_terminal(next_states, ego_a, params, geoms, dtot, knots, koff, cx, cy):
    """Step reward for landing in next_states plus the terminal code of that state."""
    mu0 = int(next_states[0, 2])
    x, y, hx, hy, kappa = eval_pose(knots, koff, cx, cy, mu0, next_states[0, 0])
    v_des = desired_velocity(kappa, params[P_ALATMAX], params[P_VLIM])
    dv = v_des - next_states[0, 1]
    if dv >= 1.0:
        r = -params[P_RVEL] * dv
    else:
        r = -params[P_RVEL] * dv * dv
    r -= params[P_RACC] * ego_a * ego_a
    crashed = ego_collision(next_states, geoms, knots, koff, cx, cy)
    if crashed:
        r -= params[P_RCRASH]
        return r, TERM_CRASH
    if next_states[0, 0] >= dtot[mu0] - 0.5 * geoms[0, 1]:
        return r, TERM_GOAL
    return r, TERM_NONE


# ---------------------------------------------------------------------------
# Fused solver-facing steps
# ---------------------------------------------------------------------------

@njit(cache=True)
def fused_step(states, geoms, ego_a, params, dtot,
               knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
               noise, out_state, out_obs, out_key):
    """Transition + observation + key + reward + terminal in one call.

    Noise layout: n IDM draws, then 2*(n+1) process draws, then 6*(n+1)
    observation draws.  Returns (reward, terminal_code).
    """
    n_all = states.shape[0]
    n_oth = n_all - 1
    transition(states, geoms, ego_a, params, dtot,
               knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
               noise[: n_oth + 2 * n_all], out_state)
    observe(out_state, params, knots, koff, cx, cy,
            noise[n_oth + 2 * n_all:], out_obs)
    observation_key(out_obs, params[P_KEY_POS_BIN], params[P_KEY_SPEED_BIN], out_key)
    return reward_terminal(out_state, ego_a, params, geoms, dtot, knots, koff, cx, cy)


@njit(cache=True)
def lookahead_value(states, geoms, params, dtot,
                    knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
                    noise, scratch_a, scratch_b):
    """Coasting rollout value: ego holds zero acceleration, others follow IDM.

    Discounted rewards over lookahead_depth steps; a crash or goal inside the
    rollout terminates it and contributes the terminal value.
    """
    depth = int(params[P_LOOKAHEAD])
    gamma = params[P_GAMMA]
    n_all = states.shape[0]
    per = (n_all - 1) + 2 * n_all
    cur = scratch_a
    nxt = scratch_b
    for i in range(n_all):
        cur[i, 0] = states[i, 0]
        cur[i, 1] = states[i, 1]
        cur[i, 2] = states[i, 2]
    total = 0.0
    disc = 1.0
    for step in range(depth):
        transition(cur, geoms, 0.0, params, dtot,
                   knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
                   noise[step * per: (step + 1) * per], nxt)
        r, code = reward_terminal(nxt, 0.0, params, geoms, dtot, knots, koff, cx, cy)
        total += disc * r
        if code != TERM_NONE:
            if code == TERM_CRASH:
                total += disc * gamma * (-params[P_RCRASH])
            return total
        disc *= gamma
        tmp = cur
        cur = nxt
        nxt = tmp
    return total


@njit(cache=True)
def belief_propagate(particles, geoms, ego_a, params, dtot,
                     knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
                     obs, noise, out_states, out_logw):
    """Propagate every particle one step and score it against an observation."""
    n_par = particles.shape[0]
    for k in range(n_par):
        transition(particles[k], geoms, ego_a, params, dtot,
                   knots, koff, cx, cy, lt_p, lt_lat, ltoff, lstep,
                   noise[k], out_states[k])
        out_logw[k] = log_likelihood(obs[:, :], out_states[k], params,
                                     knots, koff, cx, cy)


# ---------------------------------------------------------------------------
# Intention inference
# ---------------------------------------------------------------------------

@njit(cache=True)
def intention_weights(qcoef, knots, koff, cx, cy, samp_x, samp_y, samp_p, poff,
                      px, py, hdx, hdy, out_w, out_p, out_hx, out_hy):
    """Unnormalized path-intention weights for one measured vehicle.

    For each path: out_w = q * f1 * f2 where f1 penalizes the projection
    distance and f2 the heading mismatch; out_p is the projected arc position
    and (out_hx, out_hy) the path heading there, used by the particle spawner
    to project the measured velocity.
    """
    m = koff.shape[0] - 1
    for mu in range(m):
        p, dist = project_point(knots, koff, cx, cy, samp_x, samp_y, samp_p, poff,
                                mu, px, py)
        x, y, hx, hy, kappa = eval_pose(knots, koff, cx, cy, mu, p)
        alpha = hdx * hx + hdy * hy
        d2 = dist * dist
        # log of q * f1 * f2; the distance feature underflows beyond ~25 m,
        # so normalization happens in log space on the caller side
        out_w[mu] = math.log(qcoef[mu]) + (-0.05 * d2 * d2 + 1.0) \
            + 3.0 * (alpha - 1.0)
        out_p[mu] = p
        out_hx[mu] = hx
        out_hy[mu] = hy
