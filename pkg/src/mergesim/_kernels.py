"""Compiled inner loops for scene dynamics.

Everything here operates on the packed array representation of a scene
(see :mod:`mergesim.scene`): traffic is a float64 ``(n, 11)`` array whose
rows are sorted by the ``S`` column, plus an ``(n,)`` int64 id array and a
4-float ego record ``(s, v, a, length)``.  All public operations in the
package are thin wrappers over these kernels, so there is exactly one
implementation of the dynamics.

Kernels never mutate their inputs; they return fresh arrays.  This keeps
scene values immutable, which the tree search relies on.
"""

import numpy as np
from numba import njit

# Column layout of the packed traffic array.
S, V, A, LEN, C, V0, S0, T, AMAX, B, DELTA = range(11)
N_COLS = 11

# Ego record layout: (s, v, a, length).
EGO_S, EGO_V, EGO_A, EGO_LEN = range(4)

# Partial status codes returned by advance_k (timeout is applied by callers
# because it depends on the step counter, not on the scene geometry).
STATUS_RUNNING = 0
STATUS_COLLISION = 1
STATUS_GOAL = 2


@njit(cache=True)
def step_kinematics_k(s, v, a, dt):
    """Constant-acceleration point-mass step that never reverses.

    If the commanded deceleration would drive the velocity below zero
    within the step, the position is integrated analytically up to the
    stop time and the vehicle stays at rest for the remainder.
    """
    v_next = v + a * dt
    if v_next < 0.0:
        t_stop = v / (-a)
        return s + v * t_stop + 0.5 * a * t_stop * t_stop, 0.0
    return s + v * dt + 0.5 * a * dt * dt, v_next


@njit(cache=True)
def idm_accel_k(v, gap, dv, v0, s0, t_hw, a_max, b, delta, a_hard):
    """Intelligent-driver-model acceleration.

    ``gap`` is the bumper-to-bumper distance to the leader and ``dv`` the
    closing speed (own velocity minus leader velocity).  Pass ``gap = inf``
    for a free road.  A non-positive gap is degenerate (bodies already
    overlap) and returns the emergency value ``-a_hard``.
    """
    if gap <= 0.0:
        return -a_hard
    s_star = s0 + v * t_hw + v * dv / (2.0 * np.sqrt(a_max * b))
    if s_star < 0.0:
        s_star = 0.0
    acc = a_max * (1.0 - (v / v0) ** delta - (s_star / gap) ** 2)
    if acc < -a_hard:
        return -a_hard
    if acc > a_max:
        return a_max
    return acc


@njit(cache=True)
def ttm_k(dist, v, eps_v):
    """Constant-velocity time to reach the merge point.

    Zero once the merge point is passed; infinite for a (nearly) stopped
    vehicle, which therefore never triggers anyone's yield gate.
    """
    if dist <= 0.0:
        return 0.0
    if v <= eps_v:
        return np.inf
    return dist / v


@njit(cache=True)
def yield_index_k(tr, ego_s):
    """Index of the nearest traffic vehicle behind the ego projection, -1 if none."""
    idx = -1
    for i in range(tr.shape[0]):
        if tr[i, S] < ego_s:
            idx = i
        else:
            break
    return idx


# Ego modes for the acceleration sweep.
EGO_NONE = 0      # no merging vehicle to consider (absent or too far out)
EGO_MERGING = 1   # ego on the merge lane: the yield gate may apply
EGO_CROSSED = 2   # ego past the merge point: an ordinary main-lane leader


@njit(cache=True)
def _accel_one_k(tr, i, c_i, yield_idx, ego_s, ego_v, ego_len, ego_mode,
                 sensor_range, eps_v, a_hard):
    """Cooperative-IDM acceleration of traffic vehicle ``i`` on a frozen scene.

    ``c_i`` is the cooperation level to evaluate with (callers may override
    the stored one, which is how the belief filter forms its hypotheses).
    Only the vehicle at ``yield_idx`` ever evaluates the yield gate; with an
    active gate the ego projection replaces the real leader.
    """
    n = tr.shape[0]
    v = tr[i, V]
    if (ego_mode == EGO_MERGING and i == yield_idx and c_i > 0.0
            and ego_s - tr[i, S] <= sensor_range):
        ttm_ego = ttm_k(-ego_s, ego_v, eps_v)
        ttm_self = ttm_k(-tr[i, S], v, eps_v)
        if ttm_ego < np.inf and ttm_self < np.inf and ttm_ego < c_i * ttm_self:
            gap = (ego_s - ego_len) - tr[i, S]
            if gap <= 0.0:
                return -a_hard
            return idm_accel_k(v, gap, v - ego_v, tr[i, V0], tr[i, S0],
                               tr[i, T], tr[i, AMAX], tr[i, B], tr[i, DELTA],
                               a_hard)
    # Standard IDM against the real leader; a crossed ego joins the ordering.
    lead_s = np.inf
    lead_v = 0.0
    lead_len = 0.0
    has_lead = False
    if i + 1 < n:
        lead_s = tr[i + 1, S]
        lead_v = tr[i + 1, V]
        lead_len = tr[i + 1, LEN]
        has_lead = True
    if ego_mode == EGO_CROSSED and ego_s > tr[i, S] and ego_s < lead_s:
        lead_s = ego_s
        lead_v = ego_v
        lead_len = ego_len
        has_lead = True
    if not has_lead:
        return idm_accel_k(v, np.inf, 0.0, tr[i, V0], tr[i, S0], tr[i, T],
                           tr[i, AMAX], tr[i, B], tr[i, DELTA], a_hard)
    gap = (lead_s - lead_len) - tr[i, S]
    return idm_accel_k(v, gap, v - lead_v, tr[i, V0], tr[i, S0], tr[i, T],
                       tr[i, AMAX], tr[i, B], tr[i, DELTA], a_hard)


@njit(cache=True)
def _ego_mode_k(has_ego, ego_s, sensor_range):
    if not has_ego:
        return EGO_NONE
    if ego_s >= 0.0:
        return EGO_CROSSED
    if -ego_s > sensor_range:
        return EGO_NONE
    return EGO_MERGING


@njit(cache=True)
def traffic_accels_k(tr, has_ego, ego_s, ego_v, ego_len, sensor_range, eps_v,
                     a_hard):
    """Simultaneous cooperative-IDM accelerations for every traffic vehicle."""
    n = tr.shape[0]
    out = np.empty(n)
    mode = _ego_mode_k(has_ego, ego_s, sensor_range)
    yi = yield_index_k(tr, ego_s) if mode == EGO_MERGING else -1
    for i in range(n):
        out[i] = _accel_one_k(tr, i, tr[i, C], yi, ego_s, ego_v, ego_len,
                              mode, sensor_range, eps_v, a_hard)
    return out


@njit(cache=True)
def predict_hypotheses_k(tr, has_ego, ego_s, ego_v, ego_len, sensor_range,
                         eps_v, a_hard, dt):
    """One-step (s, v) predictions per vehicle under forced cooperation 0 and 1.

    Returns an ``(n, 4)`` array of columns ``(s_c0, v_c0, s_c1, v_c1)``.
    Only the subject's own cooperation is overridden; the rest of the scene
    is frozen, so the two hypotheses coincide whenever the gate is inactive.
    """
    n = tr.shape[0]
    out = np.empty((n, 4))
    mode = _ego_mode_k(has_ego, ego_s, sensor_range)
    yi = yield_index_k(tr, ego_s) if mode == EGO_MERGING else -1
    for i in range(n):
        a0 = _accel_one_k(tr, i, 0.0, yi, ego_s, ego_v, ego_len, mode,
                          sensor_range, eps_v, a_hard)
        a1 = _accel_one_k(tr, i, 1.0, yi, ego_s, ego_v, ego_len, mode,
                          sensor_range, eps_v, a_hard)
        out[i, 0], out[i, 1] = step_kinematics_k(tr[i, S], tr[i, V], a0, dt)
        out[i, 2], out[i, 3] = step_kinematics_k(tr[i, S], tr[i, V], a1, dt)
    return out


@njit(cache=True)
def eq_gap_k(v, v0, s0, t_hw, delta):
    """Gap at which IDM car-following is in equilibrium at speed ``v``.

    The speed ratio is capped below one so the expression stays finite for
    vehicles at or above their desired speed.
    """
    ratio = v / v0
    if ratio > 0.95:
        ratio = 0.95
    return (s0 + v * t_hw) / np.sqrt(1.0 - ratio ** delta)


@njit(cache=True)
def respawn_k(tr, ids, lane_start, lane_end):
    """Wrap vehicles past the main-lane end back to the lane start.

    Wrapped vehicles keep their velocity, acceleration and driver columns.
    Each is placed at the lane start unless that would leave less than its
    equilibrium gap behind the current rearmost vehicle, in which case it
    is pushed further back.  Relative order is preserved (ring semantics).
    """
    n = tr.shape[0]
    k = 0
    for i in range(n - 1, -1, -1):
        if tr[i, S] > lane_end:
            k += 1
        else:
            break
    if k == 0:
        return tr, ids, False
    out = np.empty_like(tr)
    oid = np.empty_like(ids)
    for i in range(n - k):
        out[k + i] = tr[i]
        oid[k + i] = ids[i]
    if n - k > 0:
        rear_rear = tr[0, S] - tr[0, LEN]
    else:
        rear_rear = np.inf
    for p in range(k):
        src = n - 1 - p
        target = lane_start + tr[src, LEN]
        gap = eq_gap_k(tr[src, V], tr[src, V0], tr[src, S0], tr[src, T],
                       tr[src, DELTA])
        s_new = rear_rear - gap
        if target < s_new:
            s_new = target
        out[k - 1 - p] = tr[src]
        out[k - 1 - p, S] = s_new
        oid[k - 1 - p] = ids[src]
        rear_rear = s_new - tr[src, LEN]
    return out, oid, True


@njit(cache=True)
def ego_collision_k(tr, ego_s, ego_len):
    """First traffic index whose body overlaps the ego body, -1 if none.

    Only counts once the ego body has reached the merge point (before that
    the lanes are physically separate).
    """
    if ego_s < -ego_len:
        return -1
    lo = ego_s - ego_len
    for i in range(tr.shape[0]):
        if tr[i, S] > lo and ego_s > tr[i, S] - tr[i, LEN]:
            return i
    return -1


@njit(cache=True)
def main_overlap_k(tr):
    """First index i such that vehicles i and i+1 overlap, -1 if none."""
    for i in range(tr.shape[0] - 1):
        if tr[i + 1, S] - tr[i + 1, LEN] < tr[i, S]:
            return i
    return -1


@njit(cache=True)
def _sort_rows_k(tr, ids):
    """Insertion sort by S (arrays are always nearly sorted)."""
    n = tr.shape[0]
    for i in range(1, n):
        j = i
        while j > 0 and tr[j, S] < tr[j - 1, S]:
            for col in range(N_COLS):
                tmp = tr[j, col]
                tr[j, col] = tr[j - 1, col]
                tr[j - 1, col] = tmp
            tid = ids[j]
            ids[j] = ids[j - 1]
            ids[j - 1] = tid
            j -= 1


@njit(cache=True)
def advance_k(tr, ids, has_ego, ego, ego_a_cmd, dt, lane_start, lane_end,
              goal_s, sensor_range, eps_v, a_hard):
    """One simultaneous environment step on packed arrays.

    All traffic accelerations are computed on the frozen pre-step scene,
    then every vehicle (ego included) moves, wrapped vehicles respawn, and
    the partial status (running / ego collision / goal) is evaluated.
    Returns ``(tr2, ids2, ego2, status)``.
    """
    acc = traffic_accels_k(tr, has_ego, ego[EGO_S], ego[EGO_V], ego[EGO_LEN],
                           sensor_range, eps_v, a_hard)
    n = tr.shape[0]
    tr2 = tr.copy()
    ids2 = ids.copy()
    for i in range(n):
        s2, v2 = step_kinematics_k(tr[i, S], tr[i, V], acc[i], dt)
        tr2[i, S] = s2
        tr2[i, V] = v2
        tr2[i, A] = acc[i]
    _sort_rows_k(tr2, ids2)
    tr2, ids2, _ = respawn_k(tr2, ids2, lane_start, lane_end)
    ego2 = ego.copy()
    if has_ego:
        es, ev = step_kinematics_k(ego[EGO_S], ego[EGO_V], ego_a_cmd, dt)
        ego2[EGO_S] = es
        ego2[EGO_V] = ev
        ego2[EGO_A] = ego_a_cmd
    status = STATUS_RUNNING
    if has_ego:
        if ego_collision_k(tr2, ego2[EGO_S], ego2[EGO_LEN]) >= 0:
            status = STATUS_COLLISION
        elif ego2[EGO_S] >= goal_s:
            status = STATUS_GOAL
    return tr2, ids2, ego2, status


@njit(cache=True)
def burnin_k(tr, ids, n_steps, dt, lane_start, lane_end, sensor_range, eps_v,
             a_hard):
    """Relax an ego-free scene for ``n_steps`` under the driver models."""
    ego = np.zeros(4)
    for _ in range(n_steps):
        tr, ids, ego, _ = advance_k(tr, ids, False, ego, 0.0, dt, lane_start,
                                    lane_end, np.inf, sensor_range, eps_v,
                                    a_hard)
    return tr, ids


@njit(cache=True)
def rollout_release_k(tr, ids, ego, step_index, max_steps, timeout_steps, dt,
                      lane_start, lane_end, goal_s, sensor_range, eps_v,
                      a_hard, discount):
    """Discounted return of holding zero ego acceleration from this scene."""
    total = 0.0
    g = 1.0
    si = step_index
    for _ in range(max_steps):
        tr, ids, ego, st = advance_k(tr, ids, True, ego, 0.0, dt, lane_start,
                                     lane_end, goal_s, sensor_range, eps_v,
                                     a_hard)
        si += 1
        if st == STATUS_COLLISION:
            return total - g
        if st == STATUS_GOAL:
            return total + g
        if si >= timeout_steps:
            return total
        g *= discount
    return total


@njit(cache=True)
def neighbors_k(tr, ego_s, sensor_range):
    """Indices of the four observed neighbor slots, -1 for an empty slot.

    Slots: (front vehicle on the ego path, vehicle immediately behind the
    merge point, rear neighbor of the ego projection, front neighbor of the
    ego projection).  A vehicle qualifies only within sensor range.
    """
    n = tr.shape[0]
    f_path = -1
    b_merge = -1
    rear = -1
    front = -1
    path_floor = ego_s if ego_s > 0.0 else 0.0
    for i in range(n):
        s = tr[i, S]
        d = s - ego_s
        if d < -sensor_range or d > sensor_range:
            continue
        if s >= path_floor and f_path == -1:
            f_path = i
        if s <= 0.0:
            b_merge = i
        if s < ego_s:
            rear = i
        if s >= ego_s and front == -1:
            front = i
    return f_path, b_merge, rear, front
