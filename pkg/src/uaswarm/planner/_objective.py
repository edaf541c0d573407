"""Differentiable penalty objective over a normalised-time spline.

The spline lives on ``tau in [0, 1]`` and is stretched to the duration ``D``
(a decision variable).  Initial-state and terminal-rest equalities are
removed by construction: the first three position control points follow
from ``(p, v D, a D^2)``, the last three coincide, the first two yaw points
follow from ``(psi, psi_dot D)`` and the last two coincide.

Separating planes are carried unnormalised with unit margins (ego hull
``n.q + d <= -1``, obstacle box ``n.c - e.|n| + d >= 1``); dividing by
``|n|`` afterwards turns the margins into ``1/|n|`` metres.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402
from scipy.interpolate import BSpline  # noqa: E402

from ..trajectory import (POS_DEGREE, YAW_DEGREE, clamped_uniform_knots,  # noqa: E402
                          derivative_chain, start_state_matrix)
from ..uncertainty import select_lookahead  # noqa: E402

FOV_SMOOTHING = 1e-3


@dataclass(frozen=True)
class Layout:
    n_intervals: int
    steps_per_interval: int
    n_samples: int
    n_obstacles: int
    n_peers: int
    use_motion: bool
    yaw_value_bound: bool
    workspace_lower: bool
    workspace_upper: bool
    goal_bound: bool

    @property
    def n_steps(self):
        return self.n_intervals * self.steps_per_interval

    @property
    def n_pos(self):
        return self.n_intervals + POS_DEGREE

    @property
    def n_yaw(self):
        return self.n_intervals + YAW_DEGREE

    @property
    def n_free_pos(self):
        return self.n_pos - 6

    @property
    def n_free_yaw(self):
        return self.n_yaw - 4

    @property
    def n_objects(self):
        return self.n_obstacles + self.n_peers

    @property
    def size(self):
        return (3 * self.n_free_pos + 3 + self.n_free_yaw + 1 + 1
                + 4 * self.n_objects * self.n_intervals)

    @property
    def duration_index(self):
        return 3 * self.n_free_pos + 3 + self.n_free_yaw + 1

    def split(self, x):
        o = 0
        interior = x[o:o + 3 * self.n_free_pos].reshape(self.n_free_pos, 3)
        o += 3 * self.n_free_pos
        terminal = x[o:o + 3]
        o += 3
        yaw_interior = x[o:o + self.n_free_yaw]
        o += self.n_free_yaw
        yaw_terminal = x[o]
        D = x[o + 1]
        planes = x[o + 2:].reshape(self.n_objects, self.n_intervals, 4)
        return interior, terminal, yaw_interior, yaw_terminal, D, planes

    def pack(self, interior, terminal, yaw_interior, yaw_terminal, D, planes):
        return np.concatenate([np.ravel(interior), np.ravel(terminal), np.ravel(yaw_interior),
                               [yaw_terminal, D], np.ravel(planes)])


class Constants:
    """Basis and derivative matrices on the normalised knot vectors."""

    def __init__(self, layout: Layout):
        n = layout.n_intervals
        kp = clamped_uniform_knots(n, POS_DEGREE)
        ky = clamped_uniform_knots(n, YAW_DEGREE)
        tau = np.linspace(0.0, 1.0, layout.n_steps + 1)
        tau_s = np.linspace(0.0, 1.0, layout.n_samples)
        self.B_step = BSpline.design_matrix(tau, kp, POS_DEGREE).toarray()
        self.By_step = BSpline.design_matrix(tau, ky, YAW_DEGREE).toarray()
        self.B_sample = BSpline.design_matrix(tau_s, kp, POS_DEGREE).toarray()
        self.M1 = derivative_chain(kp, POS_DEGREE, layout.n_pos, 1)
        self.M2 = derivative_chain(kp, POS_DEGREE, layout.n_pos, 2)
        self.M3 = derivative_chain(kp, POS_DEGREE, layout.n_pos, 3)
        self.Y1 = derivative_chain(ky, YAW_DEGREE, layout.n_yaw, 1)
        self.Y2 = derivative_chain(ky, YAW_DEGREE, layout.n_yaw, 2)
        self.S_inv = np.linalg.inv(start_state_matrix(kp, POS_DEGREE, 3))
        self.Sy_inv = np.linalg.inv(start_state_matrix(ky, YAW_DEGREE, 2))
        s = layout.steps_per_interval
        self.step_idx = np.array([np.arange(j * s, (j + 1) * s + 1) for j in range(n)])
        self.hull_idx = np.array([np.arange(j, j + POS_DEGREE + 1) for j in range(n)])
        self.vel_idx = np.array([np.arange(j, j + POS_DEGREE) for j in range(n)])
        look = select_lookahead(tau[1:], tau_s)
        self.look_valid = look >= 0
        self.look_idx = np.where(look >= 0, look, 0)
        self.tau = tau


def _transition(dt):
    I = jnp.eye(3)
    Z = jnp.zeros((3, 3))
    return jnp.block([[I, dt * I, 0.5 * dt * dt * I], [Z, I, dt * I], [Z, Z, I]])


def _fov_multiplier(target, ego, yaw, prm):
    d = target - ego
    z = d[0] * jnp.cos(yaw) + d[1] * jnp.sin(yaw)
    f = -jnp.cos(0.5 * prm["theta"]) + z / jnp.sqrt(d @ d + FOV_SMOOTHING ** 2)
    den = 1.0 + f + prm["fov_eps"]
    safe = jnp.where(den > 0, den, 1.0)
    m = (1.0 - f) / safe
    return jnp.where((den > 0) & (m < prm["max_mult"]), m, prm["max_mult"])


def _propagate(P0, F, targets, egos, yaws, valid, prm):
    """Predict + FOV-weighted position update per step; ``valid=False`` skips the update."""

    def step(P, inp):
        tgt, e, yaw, ok = inp
        Pp = F @ P @ F.T
        R = _fov_multiplier(tgt, e, yaw, prm) * prm["R_max"]
        S = Pp[:3, :3] + R
        K = jnp.linalg.solve(S, Pp[:3, :]).T
        Pu = Pp - K @ Pp[:3, :]
        Pn = jnp.where(ok, Pu, Pp)
        Pn = 0.5 * (Pn + Pn.T)
        return Pn, Pn

    _, Ps = jax.lax.scan(step, P0, (targets, egos, yaws, valid))
    return jnp.concatenate([P0[None], Ps])


def _relu(x):
    return jnp.maximum(x, 0.0)


def make_functions(layout: Layout):
    c = Constants(layout)
    N = layout.n_steps
    n = layout.n_intervals

    def decode(x, prm):
        interior, terminal, yi, yt, D, planes = layout.split(x)
        start = jnp.asarray(c.S_inv) @ jnp.stack([prm["p0"], prm["v0"] * D, prm["a0"] * D * D])
        Q = jnp.concatenate([start, interior, jnp.tile(terminal, (3, 1))])
        ys = jnp.asarray(c.Sy_inv) @ jnp.stack([prm["psi0"], prm["psid0"] * D])
        Y = jnp.concatenate([ys, yi, jnp.full(2, yt)])
        return Q, Y, D, planes

    def pieces(x, prm):
        Q, Y, D, planes = decode(x, prm)
        tight = 1.0 - prm["tightening"]
        h_int = D / n
        V = c.M1 @ Q / D
        A = c.M2 @ Q / (D * D)
        J = c.M3 @ Q / D ** 3
        Yd = c.Y1 @ Y / D
        Ya = c.Y2 @ Y / (D * D)

        cost = (prm["w"][0] * h_int * jnp.sum(J * J)
                + prm["w"][1] * h_int * jnp.sum(Ya * Ya)
                + prm["w"][2] * (prm["t_in"] + D)
                + prm["w"][3] * jnp.sum((Q[-1] - prm["goal"]) ** 2))
        dy = Y[-1] - prm["goal_yaw"]
        cost = cost + prm["w"][4] * jnp.arctan2(jnp.sin(dy), jnp.cos(dy)) ** 2

        ego = c.B_step @ Q
        yaw = c.By_step @ Y
        dt = D / N
        F = _transition(dt)
        q = prm["chi2"]
        res = []

        if layout.use_motion:
            samples = c.B_sample @ Q
            Pm = _propagate(prm["prior"], F, samples[c.look_idx], ego[1:], yaw[1:],
                            jnp.asarray(c.look_valid), prm)
            dm = jnp.diagonal(Pm[:, :3, :3], axis1=1, axis2=2)
            worst = jnp.max(dm[c.step_idx], axis=1)
            vb = jnp.minimum(prm["v_cap"], prm["v_limit"] / jnp.sqrt(worst))
        else:
            vb = jnp.tile(prm["v_cap"], (n, 1))
        res.append((jnp.abs(V[c.vel_idx]) - tight * vb[:, None, :]).ravel())
        res.append((jnp.abs(A) - tight * prm["a_max"]).ravel())
        res.append((jnp.abs(J) - tight * prm["j_max"]).ravel())
        res.append(jnp.abs(Yd) - tight * prm["yaw_rate_max"])
        if layout.yaw_value_bound:
            res.append(jnp.abs(Y) - tight * prm["yaw_max"])
        if layout.workspace_lower:
            res.append((prm["ws_lo"] - Q).ravel())
        if layout.workspace_upper:
            res.append((Q - prm["ws_hi"]).ravel())
        if layout.goal_bound:
            res.append(jnp.atleast_1d(jnp.sum((Q[-1] - prm["goal"]) ** 2)
                                      - (tight * prm["goal_tol"]) ** 2))

        if layout.n_objects:
            t_rel = jnp.asarray(c.tau) * D
            centers, exts = [], []
            if layout.n_obstacles:
                means = (prm["obs_p"][:, None, :] + prm["obs_v"][:, None, :] * t_rel[None, :, None]
                         + 0.5 * prm["obs_a"][:, None, :] * t_rel[None, :, None] ** 2)
                valid = jnp.ones(N, dtype=bool)

                def one(P0, mean):
                    return _propagate(P0, F, mean[1:], ego[1:], yaw[1:], valid, prm)

                Po = jax.vmap(one)(prm["obs_cov"], means)
                do = jnp.diagonal(Po[:, :, :3, :3], axis1=2, axis2=3)
                hw = jnp.max(jnp.sqrt(q * jnp.maximum(do, 0.0) + 1e-12)[:, c.step_idx], axis=2)
                pad = jnp.linalg.norm(prm["obs_a"], axis=1) * dt * dt / 8.0
                centers.append(means[:, c.step_idx])
                exts.append(prm["obs_ext"][:, None, :] + prm["r_agent"] + hw + pad[:, None, None])
            if layout.n_peers:
                t_abs = prm["t_in"] + t_rel
                pos = jax.vmap(lambda tt, pp: jnp.stack(
                    [jnp.interp(t_abs, tt, pp[:, i]) for i in range(3)], axis=1))(
                    prm["peer_t"], prm["peer_p"])
                pad = prm["peer_amax"] * dt * dt / 8.0 + prm["peer_pad"]
                e = prm["peer_ext"] + prm["r_agent"] + pad
                centers.append(pos[:, c.step_idx])
                exts.append(jnp.broadcast_to(e[:, None, None], (layout.n_peers, n, 3)))
            C = jnp.concatenate(centers)            # (n_obj, n, s+1, 3)
            E = jnp.concatenate(exts)               # (n_obj, n, 3)
            nrm = planes[..., :3]
            d = planes[..., 3]
            H = Q[c.hull_idx]                       # (n, 4, 3)
            ego_side = jnp.einsum("jkd,ojd->ojk", H, nrm) + d[..., None] + 1.0
            absn = jnp.sqrt(nrm * nrm + 1e-12)
            support = (jnp.einsum("ojkd,ojd->ojk", C, nrm) - jnp.sum(E * absn, axis=-1)[..., None]
                       + d[..., None])
            res.append(ego_side.ravel())
            res.append((1.0 - support).ravel())
        return cost, jnp.concatenate(res)

    def objective(x, prm):
        cost, g = pieces(x, prm)
        return cost + prm["mu"] * jnp.sum(_relu(g) ** 2)

    fns = Functions(
        penalty=jax.jit(jax.value_and_grad(objective)),
        report=jax.jit(pieces),
        cost_grad=jax.jit(jax.value_and_grad(lambda x, prm: pieces(x, prm)[0])),
        residual_jac=jax.jit(jax.jacfwd(lambda x, prm: pieces(x, prm)[1])),
    )
    return fns, c


@dataclass(frozen=True)
class Functions:
    penalty: object
    report: object
    cost_grad: object
    residual_jac: object


@lru_cache(maxsize=32)
def compiled(layout: Layout):
    return make_functions(layout)
