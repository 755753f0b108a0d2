"""Registered experiments. Each takes a parameter dict and returns a
ResultTable whose recorded checks decide the exit status. Parameter
defaults reproduce the acceptance configurations; a config file can
override any of them (smaller grids for smoke runs, larger for studies).

Everything here is deterministic: fixed seeds, fixed reduction orders,
byte-stable CSV formatting.
"""

import numpy as np

from ..fields import (PhaseState, constant_field, fixed_direction_field,
                      harmonic_general_field, validate_field)
from ..straighten import RotationField
from ..characteristics import (IntegratorConfig, batch_linear_flow,
                               batch_straightened_flow, flow_jacobian,
                               integrate_straightened)
from ..asymptotics import (FixedDirectionApprox, approx_error_fixed,
                           averaged_flow_general, convergence_order,
                           diffeo_margin)
from ..quadrature import MomentumBallGrid, SphericalQuadrature
from ..wavekernel import (shell_convolution, symbol_bound_p, symbol_bound_q,
                          symbol_p, symbol_q, symbol_sup_on_sphere,
                          transfer_identity_residual)
from ..oscillatory import (OscillatoryIntegralSpec, averaged_initial_term,
                           mean_mode_integral, oscillatory_integral)
from ..transport import (CylindricalDensity, example_closed_form,
                         lipschitz_growth_probe)
from .report import ResultTable

REGISTRY = {}


def register(name):
    def wrap(fun):
        REGISTRY[name] = fun
        return fun
    return wrap


def experiment_names():
    return sorted(REGISTRY)


def run_experiment(name, params=None) -> ResultTable:
    if name not in REGISTRY:
        raise KeyError(f"unknown experiment {name!r}; see --list")
    return REGISTRY[name](dict(params or {}))


def _model_from(params, default_kind):
    kind = params.get("model.kind", default_kind)
    if kind == "constant":
        return constant_field(b0=params.get("model.b0", 1.0))
    if kind == "fixed-direction":
        return fixed_direction_field(
            b0=params.get("model.b0", 1.0), a=params.get("model.a", 0.1),
            k1=params.get("model.k1", 1.0), c=params.get("model.c", 0.0),
            k2=params.get("model.k2", 1.0))
    if kind == "general-direction":
        return harmonic_general_field(alpha=params.get("model.alpha", 0.15))
    raise ValueError(f"unknown model kind {kind!r}")


def _eps_grid(params, default):
    grid = params.get("epsilon_grid", default)
    if not isinstance(grid, list):
        grid = [grid]
    return [float(v) for v in grid]


_FIXED_STATES = [
    PhaseState([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
    PhaseState([0.3, -0.2, 0.1], [0.5, 0.5, 0.3]),
    PhaseState([-0.4, 0.1, 0.0], [0.0, 0.8, -0.4]),
    PhaseState([0.2, 0.3, -0.1], [-0.6, 0.2, 0.5]),
]


@register("validate-field")
def exp_validate_field(params):
    from ..fields import Box, field_from_callable

    table = ResultTable(
        "validate-field",
        ["model_idx", "max_div", "max_curl", "min_b", "max_b",
         "lower_ok", "curl_ok", "n_errors"])
    crossing = field_from_callable(
        lambda p: np.stack([np.zeros(p.shape[:-1]), np.zeros(p.shape[:-1]),
                            p[..., 0]], axis=-1),
        region=Box((-1, -1, -1), (1, 1, 1)), c_lower=0.1,
        kind="fixed-direction")
    cases = [
        ("constant", constant_field(1.0)),
        ("fixed-direction", fixed_direction_field(1.0, 0.1)),
        ("general-direction", harmonic_general_field(0.15)),
        ("zero-crossing", crossing),
    ]

    for idx, (label, model) in enumerate(cases):
        rep = validate_field(model, sample_density=int(params.get("grid", 9)))
        table.add_row(idx, rep.max_div, rep.max_curl, rep.min_b, rep.max_b,
                      float(rep.lower_bound_ok), float(rep.curl_free_ok),
                      float(len(rep.errors)))
        table.add_footer(f"model_{idx}", label)
        if label == "constant":
            table.check(rep.max_div == 0.0 and rep.max_curl == 0.0
                        and rep.admissible, "constant field must be clean")
        elif label == "fixed-direction":
            table.check(rep.max_div <= 1e-12, "fixed-direction divergence")
            table.check(abs(rep.max_curl - 0.1) < 1e-6,
                        "fixed-direction curl magnitude should be ~0.1")
            table.check(rep.admissible and not rep.curl_free_ok,
                        "curl must warn, not fail, for fixed direction")
        elif label == "general-direction":
            table.check(rep.admissible and rep.curl_free_ok and
                        rep.max_div <= 1e-12, "general field must be clean")
        else:
            table.check(not rep.lower_bound_ok,
                        "magnitude floor violation must be flagged")
    return table


@register("oracle-homogeneous")
def exp_oracle_homogeneous(params):
    """Integrator against the exact gyration in a homogeneous field."""
    b0 = params.get("model.b0", 1.0)
    model = constant_field(b0)
    tol = float(params.get("tolerance", 1e-8))
    n_base = int(params.get("steps_per_gyroperiod", 2048))
    t_grid = np.linspace(0.0, float(params.get("t_final", 1.0)), 9)[1:]
    states = [PhaseState([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
              PhaseState([0.2, -0.1, 0.3], [0.5, 0.6, -0.4])]
    X0 = np.array([s.x for s in states])
    Xi0 = np.array([s.xi for s in states])
    bar = Xi0.copy()
    bar[:, 2] = 0.0
    perp = np.stack([Xi0[:, 1], -Xi0[:, 0], np.zeros(len(states))], axis=1)
    gamma = np.sqrt(1.0 + np.sum(Xi0 ** 2, axis=1))

    table = ResultTable("oracle-homogeneous", ["eps", "sup_err_x", "sup_err_xi"])
    for eps in _eps_grid(params, [1e-2, 1e-3]):
        # splitting position error scales like eps / n^2; keep n^2 ~ eps
        # so each epsilon meets the tolerance with the same margin
        n_per = max(64, int(np.ceil(n_base * np.sqrt(eps / 1e-3))))
        cfg = IntegratorConfig(steps_per_gyroperiod=n_per,
                               t_final=float(t_grid[-1]), epsilon=eps)
        xs, xis = batch_linear_flow(model, X0, Xi0, t_grid, cfg)
        err_x = err_xi = 0.0
        for k, t in enumerate(t_grid):
            phase = (b0 * t / (eps * gamma))[:, None]
            xi_exact = np.cos(phase) * bar - np.sin(phase) * perp
            xi_exact[:, 2] += Xi0[:, 2]
            x_exact = X0 + (t * Xi0[:, 2] / gamma)[:, None] * np.eye(3)[2] \
                + (eps / b0) * (np.sin(phase) * bar + (np.cos(phase) - 1.0) * perp)
            err_x = max(err_x, float(np.max(np.linalg.norm(xs[k] - x_exact, axis=1))))
            err_xi = max(err_xi, float(np.max(np.linalg.norm(xis[k] - xi_exact, axis=1))))
        table.add_row(eps, err_x, err_xi)
        table.check(err_x <= tol, f"x error {err_x:.3e} > {tol:.1e} at eps={eps}")
        table.check(err_xi <= tol, f"xi error {err_xi:.3e} > {tol:.1e} at eps={eps}")
    return table


@register("converge-fixed")
def exp_converge_fixed(params):
    """Orders of the fixed-direction closed-form flow approximation."""
    model = _model_from(params, "fixed-direction")
    eps_grid = _eps_grid(params, [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    t_grid = np.linspace(0.0, float(params.get("t_final", 0.5)), 6)[1:]
    n_per = int(params.get("steps_per_gyroperiod", 64))

    table = ResultTable("converge-fixed", ["eps", "err_X", "err_Xi"])
    rows = []
    for eps in eps_grid:
        ex, exi = approx_error_fixed(model, _FIXED_STATES, eps, t_grid,
                                     steps_per_gyroperiod=n_per)
        rows.append((eps, ex, exi))
        table.add_row(eps, ex, exi)

    slope_x = convergence_order([(e, x) for e, x, _ in rows])
    slope_xi = convergence_order([(e, v) for e, _, v in rows])
    table.add_footer("slope_X", slope_x)
    table.add_footer("slope_Xi", slope_xi)

    # reference-resolution cross-check at one epsilon
    eps_chk = eps_grid[len(eps_grid) // 2]
    base = approx_error_fixed(model, _FIXED_STATES, eps_chk, t_grid,
                              steps_per_gyroperiod=n_per, reference_factor=8)
    fine = approx_error_fixed(model, _FIXED_STATES, eps_chk, t_grid,
                              steps_per_gyroperiod=n_per, reference_factor=16)
    cross = abs(base[0] - fine[0]) / base[0]
    table.add_footer("reference_crosscheck_rel", cross)
    table.check(cross < 1e-2, f"reference resolution check {cross:.3e} >= 1%")

    lo_x, hi_x = params.get("slope_x_window", [1.7, 2.3])
    lo_v, hi_v = params.get("slope_xi_window", [0.7, 1.3])
    table.check(lo_x <= slope_x <= hi_x,
                f"position slope {slope_x:.3f} outside [{lo_x}, {hi_x}]")
    table.check(lo_v <= slope_xi <= hi_v,
                f"momentum slope {slope_xi:.3f} outside [{lo_v}, {hi_v}]")
    return table


@register("converge-general")
def exp_converge_general(params):
    """Orders of the averaged flow for a direction-varying field."""
    model = _model_from(params, "general-direction")
    rot = RotationField(model)
    eps_grid = _eps_grid(params, [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    t_grid = np.linspace(0.0, float(params.get("t_final", 0.3)), 5)[1:]
    n_per = int(params.get("steps_per_gyroperiod", 64))
    # the splitting's own error scales like eps / n^2 while the measured
    # gap scales like eps^2, so the 8x reference that suffices for the
    # fixed-direction study fails its 1% insensitivity gate here; 16x
    # passes it with margin
    ref_factor = int(params.get("reference_factor", 16))
    state = PhaseState([0.2, -0.1, 0.0], [0.6, 0.3, 0.4])

    def truth(eps, factor):
        cfg = IntegratorConfig(steps_per_gyroperiod=n_per * factor,
                               t_final=float(t_grid[-1]), epsilon=eps)
        xs, xis, ths = batch_straightened_flow(
            model, rot, state.x[None], state.xi[None], t_grid, cfg,
            track_angle=True)
        U = np.concatenate(
            [xs[:, 0], np.hypot(xis[:, 0, 0], xis[:, 0, 1])[:, None],
             xis[:, 0, 2][:, None]], axis=1)
        return U, ths[:, 0]

    table = ResultTable("converge-general", ["eps", "err_U", "err_Theta"])
    rows = []
    for eps in eps_grid:
        U_true, th_true = truth(eps, ref_factor)
        appr = averaged_flow_general(model, state, eps, t_grid, rotation=rot)
        err_u = float(np.max(np.linalg.norm(U_true - appr.u2, axis=1)))
        err_th = float(np.max(np.abs(th_true - appr.theta1)))
        rows.append((eps, err_u, err_th))
        table.add_row(eps, err_u, err_th)

    slope_u = convergence_order([(e, u) for e, u, _ in rows])
    slope_th = convergence_order([(e, th) for e, _, th in rows])
    table.add_footer("slope_U", slope_u)
    table.add_footer("slope_Theta", slope_th)

    eps_chk = float(params.get("crosscheck_eps", 3e-3))
    U_base, _ = truth(eps_chk, ref_factor)
    U_fine, _ = truth(eps_chk, 2 * ref_factor)
    appr = averaged_flow_general(model, state, eps_chk, t_grid, rotation=rot)
    err = float(np.max(np.linalg.norm(U_base - appr.u2, axis=1)))
    cross = float(np.max(np.linalg.norm(U_base - U_fine, axis=1))) / err
    table.add_footer("reference_crosscheck_rel", cross)
    table.check(cross < 1e-2, f"reference resolution check {cross:.3e} >= 1%")

    lo_u, hi_u = params.get("slope_u_window", [1.6, 2.4])
    lo_t, hi_t = params.get("slope_theta_window", [0.6, 1.4])
    table.check(lo_u <= slope_u <= hi_u,
                f"trajectory slope {slope_u:.3f} outside [{lo_u}, {hi_u}]")
    table.check(lo_t <= slope_th <= hi_t,
                f"phase slope {slope_th:.3f} outside [{lo_t}, {hi_t}]")
    return table


@register("symbols")
def exp_symbols(params):
    """Kernel symbol sup norms against their closed-form bounds."""
    table = ResultTable("symbols", ["R", "sup_p", "bound_p", "gamma",
                                    "sup_q", "bound_q"])
    for R in [float(v) for v in params.get("radii", [0.5, 1.0, 2.0])]:
        xi = np.array([R, 0.0, 0.0])
        sup_p = symbol_sup_on_sphere("p", xi)
        sup_q = symbol_sup_on_sphere("q", xi)
        gamma = float(np.sqrt(1.0 + R * R))
        bp, bq = symbol_bound_p(R), symbol_bound_q(R)
        table.add_row(R, sup_p, bp, gamma, sup_q, bq)
        table.check(sup_p <= bp + 1e-12, f"p sup exceeds bound at R={R}")
        table.check(abs(sup_p - gamma) <= 1e-3,
                    f"p sup {sup_p:.6f} != gamma {gamma:.6f} at R={R}")
        table.check(sup_q <= bq + 1e-12, f"q sup exceeds bound at R={R}")

    rng = np.random.default_rng(42)
    xi = rng.normal(size=(1000, 3))
    t = 1.0 + rng.random(1000)
    x = rng.normal(size=(1000, 3)) * 0.3
    alpha = 0.5 + rng.random(1000)
    hom_p = np.max(np.abs(symbol_p(alpha * t, alpha[:, None] * x, xi)
                          - symbol_p(t, x, xi)))
    hom_q = np.max(np.abs(symbol_q(alpha * t, alpha[:, None] * x, xi)
                          - symbol_q(t, x, xi) / alpha[:, None]))
    table.add_footer("max_homogeneity_err_p", float(hom_p))
    table.add_footer("max_homogeneity_err_q", float(hom_q))
    table.check(hom_p <= 1e-12 and hom_q <= 1e-12, "homogeneity violated")
    return table


@register("shell")
def exp_shell(params):
    """Shell-convolution analytic cases and a refinement oracle."""
    squad = SphericalQuadrature.build(int(params.get("n_polar", 16)),
                                      int(params.get("n_azimuth", 32)))
    t = float(params.get("t_final", 1.3))
    x0 = np.zeros(3)
    table = ResultTable("shell", ["case_idx", "value", "reference", "abs_err"])

    ones = lambda nodes: np.ones(len(nodes))
    unit_f = lambda tt, pts: np.ones(len(pts))
    v1 = float(shell_convolution(ones, unit_f, t, x0, squad))
    table.add_row(0, v1, t * t / 2, abs(v1 - t * t / 2))
    table.check(abs(v1 - t * t / 2) <= 1e-6 * t * t / 2,
                "constant case must give t^2/2")

    v2 = shell_convolution(lambda nodes: nodes, unit_f, t, x0, squad)
    table.add_row(1, float(np.max(np.abs(v2))), 0.0, float(np.max(np.abs(v2))))
    table.check(float(np.max(np.abs(v2))) <= 1e-10, "odd weight must cancel")

    xi = np.array([0.4, 0.2, -0.3])
    gauss = lambda tt, pts: np.exp(-2.0 * np.sum((pts - 0.1) ** 2, axis=-1))
    p_weight = lambda nodes: symbol_p(np.ones(len(nodes)), nodes,
                                      np.broadcast_to(xi, nodes.shape))
    v3 = shell_convolution(p_weight, gauss, t, x0, squad, time_steps=24)
    v3r = shell_convolution(p_weight, gauss, t, x0, squad.refine(2),
                            time_steps=48)
    rel = float(np.linalg.norm(v3 - v3r) / np.linalg.norm(v3r))
    table.add_row(2, float(np.linalg.norm(v3)), float(np.linalg.norm(v3r)), rel)
    table.check(rel <= 1e-6, f"refinement oracle disagrees: {rel:.3e}")
    return table


@register("transfer-identity")
def exp_transfer_identity(params):
    """Dual-quadrature check of the derivative-transfer identity."""
    model = _model_from(params, "fixed-direction")
    rot = RotationField(model)
    squad = SphericalQuadrature.build(int(params.get("n_polar", 12)),
                                      int(params.get("n_azimuth", 24)))
    ball = MomentumBallGrid.build(1.0, n_r=6,
                                  n_theta=int(params.get("n_theta", 32)),
                                  n_z=6)
    t = float(params.get("t_final", 0.8))
    x0 = np.zeros(3)
    table = ResultTable("transfer-identity",
                        ["case_idx", "lhs_norm", "rhs_norm", "rel_diff"])

    dens = CylindricalDensity(mode=1, harmonic="cos")
    lhs, rhs, rel = transfer_identity_residual(model, rot, dens, t, x0,
                                               squad, ball, time_steps=16)
    table.add_row(0, float(np.linalg.norm(lhs)), float(np.linalg.norm(rhs)), rel)
    table.check(rel <= 1e-4, f"transfer identity gap {rel:.3e} > 1e-4")
    table.check(float(np.linalg.norm(lhs)) > 1e-6,
                "test density produced a degenerate case")

    dens0 = CylindricalDensity(mode=0)
    lhs0, rhs0, _ = transfer_identity_residual(model, rot, dens0, t, x0,
                                               squad, ball, time_steps=16)
    both = max(float(np.linalg.norm(lhs0)), float(np.linalg.norm(rhs0)))
    table.add_row(1, float(np.linalg.norm(lhs0)), float(np.linalg.norm(rhs0)),
                  both)
    table.check(both <= 1e-10, f"angle-free density must vanish, got {both:.3e}")
    table.add_footer("epsilon_free", "both sides share the 1/eps prefactor; "
                                     "it is cancelled algebraically")
    return table


@register("osc-scaling")
def exp_osc_scaling(params):
    """Oscillatory ray integrals: closed-form bound and epsilon scaling."""
    table = ResultTable("osc-scaling", ["eps", "abs_value", "bound"])
    omega = np.array([0.0, 0.0, 1.0])
    state = PhaseState([0.0, 0.0, 0.0], [0.8, 0.0, 0.3])
    gamma = float(np.sqrt(1.0 + 0.8 ** 2 + 0.3 ** 2))
    const = constant_field(1.0)
    g_one = lambda s, U: np.ones(len(np.atleast_1d(s)))

    # resonant half period: |integral| attains 2 eps gamma / |n|
    for eps in [1e-2, 1e-3]:
        t_res = np.pi * eps * gamma
        spec = OscillatoryIntegralSpec(g=g_one, n=1, eps=eps, omega=omega,
                                       t=t_res, state=state)
        val = abs(oscillatory_integral(spec, const, nodes_per_period=64))
        bound = 2.0 * eps * gamma
        table.add_row(eps, val, bound)
        table.check(val <= bound + 1e-12,
                    f"closed-form bound violated at eps={eps}")
        table.check(abs(val - bound) <= 1e-12,
                    f"resonant equality missed by {abs(val - bound):.2e}")

    # mean mode control: no epsilon decay
    ctrl = mean_mode_integral(g_one, 0.5, state)
    table.add_footer("mean_mode_value", ctrl)
    table.check(abs(ctrl - 0.5) <= 1e-12, "mean mode must integrate g plainly")

    # inhomogeneous sweep; the endpoint phase makes |I| oscillate in eps,
    # so the sweep measures the envelope: max |I| over a window of final
    # times (that is the quantity the eps-decay statement bounds)
    model = _model_from(params, "fixed-direction")
    ray = np.array([0.6, 0.0, 0.8])
    g_amp = lambda s, U: 1.0 + 0.2 * U[:, 0]
    t_hi = float(params.get("t_final", 0.3))
    t_ends = np.linspace(0.5 * t_hi, t_hi, 24)
    rows = []
    for eps in _eps_grid(params, [1e-1, 1e-2, 1e-3, 1e-4]):
        val = max(abs(oscillatory_integral(
            OscillatoryIntegralSpec(g=g_amp, n=1, eps=eps, omega=ray,
                                    t=float(te), state=state),
            model, nodes_per_period=64)) for te in t_ends)
        rows.append((eps, val))
        table.add_row(eps, val, np.nan)
    slope = convergence_order(rows)
    table.add_footer("slope_ray", slope)
    table.check(0.7 <= slope <= 1.3, f"ray integral slope {slope:.3f}")

    # averaged initial-data term: ill-prepared data decays with eps,
    # angle-free data sits at quadrature level
    ball = MomentumBallGrid.build(1.0, n_r=4, n_theta=16, n_z=4)
    squad = SphericalQuadrature.build(8, 16)
    f_ill = CylindricalDensity(mode=2, harmonic="cos")
    t_avg = float(params.get("avg_t_final", 0.25))
    avg_rows = []
    for eps in _eps_grid(params, [3e-2, 1e-2, 3e-3])[:3]:
        _, nrm = averaged_initial_term(model, f_ill, t_avg, np.zeros(3), eps,
                                       ball, squad)
        avg_rows.append((eps, nrm))
        table.add_row(eps, nrm, np.nan)
    slope_avg = convergence_order(avg_rows)
    table.add_footer("slope_averaged_term", slope_avg)
    table.check(slope_avg >= 0.7, f"averaged term slope {slope_avg:.3f} < 0.7")

    f_radial = CylindricalDensity(mode=0)
    _, nrm0 = averaged_initial_term(model, f_radial, t_avg, np.zeros(3),
                                    1e-2, ball, squad)
    table.add_footer("radial_control", nrm0)
    table.check(nrm0 <= 1e-4 * max(n for _, n in avg_rows) + 1e-8,
                f"angle-free data must cancel, got {nrm0:.3e}")
    return table


@register("prepared-vs-ill")
def exp_prepared_vs_ill(params):
    """Rotating-mode solution checks and Lipschitz growth contrast."""
    table = ResultTable("prepared-vs-ill",
                        ["eps", "sup_dt_ill", "sup_dt_prepared"])
    chi = lambda r, z: _poly_chi(r, z)
    ball = MomentumBallGrid.build(1.0, n_r=8, n_theta=32, n_z=8)
    xi_probe = np.array([[0.5, 0.2, -0.3], [0.1, 0.6, 0.2]])
    res = example_closed_form(chi, 1e-2, 0.4, np.zeros(3), xi_probe, ball=ball)
    table.add_footer("closed_form_residual", res.residual)
    table.add_footer("closed_form_rho", res.rho)
    table.add_footer("closed_form_J", float(np.linalg.norm(res.current)))
    table.check(res.residual <= 1e-10, f"transport residual {res.residual:.2e}")
    table.check(abs(res.rho) <= 1e-12, "charge density must vanish")
    table.check(float(np.linalg.norm(res.current)) <= 1e-12,
                "current density must vanish")

    model = _model_from(params, "fixed-direction")
    eps_list = _eps_grid(params, [1e-1, 1e-2, 1e-3])
    t = float(params.get("t_final", 0.5))
    ill = CylindricalDensity(mode=2, harmonic="cos")
    prep = CylindricalDensity(mode=0)
    rows_ill = lipschitz_growth_probe(model, ill, eps_list, t)
    rows_prep = lipschitz_growth_probe(model, prep, eps_list, t)
    for (eps, dt_i, _), (_, dt_p, _) in zip(rows_ill, rows_prep):
        table.add_row(eps, dt_i, dt_p)

    slope_ill = convergence_order([(e, v) for e, v, _ in rows_ill])
    vals_prep = [v for _, v, _ in rows_prep]
    ratio_prep = max(vals_prep) / min(vals_prep)
    table.add_footer("slope_dt_ill", slope_ill)
    table.add_footer("prepared_variation", ratio_prep)
    table.check(-1.3 <= slope_ill <= -0.7,
                f"ill-prepared growth slope {slope_ill:.3f} not ~ -1")
    table.check(ratio_prep <= 2.0,
                f"prepared data time derivative varied {ratio_prep:.2f}x")
    return table


def _poly_chi(r, z):
    u = (np.asarray(r) ** 2 + np.asarray(z) ** 2)
    w = 1.0 - u
    return np.where(w > 0.0, w, 0.0) ** 4


@register("volume")
def exp_volume(params):
    """Momentum-norm conservation and flow-volume preservation."""
    eps = float(params.get("epsilon", 1e-2))
    t = float(params.get("t_final", 1.0))
    table = ResultTable("volume", ["case_idx", "norm_drift", "det_err"])

    from ..characteristics import integrate_linear

    fixed = _model_from(params, "fixed-direction")
    cfg = IntegratorConfig(t_final=t, epsilon=eps)
    worst_drift = 0.0
    worst_det = 0.0
    for idx, state in enumerate(_FIXED_STATES):
        tr = integrate_linear(fixed, state, cfg)
        J, det = flow_jacobian(fixed, state, t, cfg)
        table.add_row(idx, tr.invariant_drift, abs(det - 1.0))
        worst_drift = max(worst_drift, tr.invariant_drift)
        worst_det = max(worst_det, abs(det - 1.0))

    general = harmonic_general_field(0.15)
    rot = RotationField(general)
    st = PhaseState([0.2, -0.1, 0.0], [0.6, 0.3, 0.4])
    tr = integrate_straightened(general, rot, None, st, cfg)
    table.add_row(len(_FIXED_STATES), tr.invariant_drift, np.nan)
    worst_drift = max(worst_drift, tr.invariant_drift)

    table.add_footer("max_norm_drift", worst_drift)
    table.add_footer("max_det_err", worst_det)
    table.check(worst_drift <= 1e-10, f"norm drift {worst_drift:.2e} > 1e-10")
    table.check(worst_det <= 1e-6, f"|det - 1| {worst_det:.2e} > 1e-6")
    return table


@register("diffeo-margin")
def exp_diffeo_margin(params):
    """Growth of ||D_x X - I|| and the below-one window."""
    model = _model_from(params, "fixed-direction")
    eps = float(params.get("epsilon", 1e-2))
    times = [float(v) for v in params.get("times", [0.25, 0.5, 1.0])]
    table = ResultTable("diffeo-margin", ["t", "margin"])
    margins = []
    for t in times:
        m = diffeo_margin(model, eps, t, _FIXED_STATES)
        margins.append(m)
        table.add_row(t, m)
    table.check(diffeo_margin(model, eps, 0.0, _FIXED_STATES) == 0.0,
                "margin at t = 0 must vanish")
    table.check(margins[-1] < 1.0, f"margin {margins[-1]:.3f} >= 1 at t={times[-1]}")
    table.check(all(a < b for a, b in zip(margins, margins[1:])),
                "margin must grow with t")
    slope = np.polyfit(times, margins, 1)[0]
    ratio = margins[-1] / (slope * times[-1])
    table.add_footer("linear_fit_slope", float(slope))
    table.add_footer("linearity_ratio", float(ratio))
    table.check(0.5 <= ratio <= 1.5, "margin growth far from linear in t")
    return table
