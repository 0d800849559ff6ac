"""End-to-end numerical studies. Each returns a StudyResult holding images,
tables, traces, masks and scalar metrics; the scenario runner writes them
to disk and the acceptance suite asserts on the metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biphoton import (ObjectImage, SPDCParams, TwoPhotonPure, difference_encoded_state, digit_eight,
                       guide_state, input_plane_state, inversion_symmetric, paper_default,
                       separable_object_ensemble)
from .correlate import CorrelationImage, fidelity_ncc, g2_from_pure, peak_metrics, project_diff, project_sum
from .events import (accidental_map, corr_image_from_events, expected_accidentals, pair_coincidences,
                     raw_coincidence_image, synthesize_events)
from .experiment import DeskSetup, build_desk
from .lattice import ComplexField, make_grid, sum_coordinate_map
from .media import (PhaseMask, ScatteringMatrix, SpeckleSpec, compose, fourier_lens, identity, is_trivial,
                    odd_phase_symbol, pcp_solution, sign_solution, slm_diagonal, speckle_field, thin_medium)
from .propagate import G2Matrix, classical, mixed_g2, singles_image, two_photon
from .shapeopt import OptConfig, identity_mask, optimize, propagate_slm, solution_distance
from .tmatrix import border_reference, hadamard_to_pixel, measure_tm, tm_error


@dataclass
class StudyResult:
    name: str
    images: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def gamma_plus(psi: TwoPhotonPure) -> CorrelationImage:
    return project_sum(g2_from_pure(psi), sum_coordinate_map(psi.grid))


def _gamma_mixed(S: ScatteringMatrix, rho) -> CorrelationImage:
    return project_sum(mixed_g2(S, rho), sum_coordinate_map(S.grid_out))


def _intensity(S: ScatteringMatrix, obj: ObjectImage) -> np.ndarray:
    e = classical(S, ComplexField(S.grid_in, obj.values.ravel()))
    return (np.abs(e.values) ** 2).reshape(S.grid_out.n, S.grid_out.n)


def _ab_ratios(trace) -> np.ndarray:
    return np.array([f.a / abs(f.c) if f.c else np.inf for f in trace.fits])


# -- exact analytic restoration ---------------------------------------------

def restoration(n: int = 32, seed: int = 0, medium_seeds=(0, 1, 2, 3, 4)) -> StudyResult:
    """sigma_r = 0 encoding of an '8' through a sign solution; classical and
    conjugate-transpose controls through the same operator."""
    grid = make_grid(n)
    _, cfg = paper_default()
    obj = digit_eight(n)
    truth = obj.values ** 2
    psi = input_plane_state(obj, SPDCParams(sigma_r=0.0), cfg, grid)
    rng = np.random.default_rng(seed)
    S = sign_solution(rng.standard_normal((n, n)), grid)
    out = gamma_plus(two_photon(S, psi))
    norm_out = out.values / out.values.max()
    wrong = S.m @ psi.psi @ S.m.conj().T
    g_wrong = project_sum(G2Matrix(grid, np.abs(wrong) ** 2), sum_coordinate_map(grid))
    res = StudyResult("restoration", params={"n": n, "seed": seed})
    res.images.update({"gamma_plus_out": out, "object": CorrelationImage(truth),
                       "gamma_plus_conjugate": g_wrong,
                       "intensity_out": _intensity(S, obj)})
    res.metrics.update({
        "fidelity": fidelity_ncc(out, truth),
        "max_rel_error": float(np.max(np.abs(norm_out - truth))),
        "fidelity_conjugate": fidelity_ncc(g_wrong, truth),
        "nontrivial": not is_trivial(S).trivial,
    })
    nccs = []
    for s in medium_seeds:
        Sg = sign_solution(np.random.default_rng(s).standard_normal((n, n)), grid)
        nccs.append(fidelity_ncc(_intensity(Sg, obj), obj.values))
    res.metrics["classical_ncc"] = nccs
    return res


# -- optimization on the desk system ----------------------------------------

def optimization(desk: DeskSetup, cfg: OptConfig, state: str = "guide") -> StudyResult:
    """Optimize the centre bin for the guide state ('guide'), its diagonal
    limit ('diagonal') or the separable ensemble ('separable')."""
    sm = desk.sm
    st = {"guide": desk.guide_slm, "diagonal": desk.diagonal_guide_slm,
          "separable": desk.separable_guide_slm}[state]()
    mask, trace = optimize(sm, st, cfg)
    res = StudyResult("optimization", params={"state": state, "macro_n": cfg.macro_n, "seed": cfg.seed})
    res.traces["trace"] = trace
    res.masks["optimized"] = mask
    bs = trace.best_so_far
    ab = _ab_ratios(trace)
    res.metrics.update({
        "initial": trace.initial, "final": float(trace.objective[-1]), "best": float(bs[-1]),
        "gain": trace.gain(), "steps": len(trace.step), "stopped": trace.stopped,
        "monotone_best": bool(np.all(np.diff(bs) >= 0)),
        "ab_max": float(ab.max()), "ab_frac_above_1e-2": float(np.mean(ab >= 1e-2)),
    })
    if isinstance(st, TwoPhotonPure):
        res.images["gamma_plus_no_medium"] = gamma_plus(
            propagate_slm(build_desk(desk.grid.n, desk.macro_n, "none", pitch=desk.grid.pitch,
                                     p=desk.p, cfg=desk.cfg).sm, PhaseMask.zeros(desk.macro_n), st))
        res.images["gamma_plus_before"] = gamma_plus(propagate_slm(sm, PhaseMask.zeros(desk.macro_n), st))
        res.images["gamma_plus_after"] = gamma_plus(propagate_slm(sm, mask, st))
    return res


def pixel_guide_image(desk: DeskSetup, mask: PhaseMask | None) -> CorrelationImage:
    """Gamma+ of the pixel-resolution SLM-plane guide state through S_m D."""
    g = guide_state(desk.p, desk.cfg.M_dprime, desk.grid)
    mask = mask or PhaseMask.zeros(desk.macro_n)
    A = desk.sm_pixel.m * np.diag(slm_diagonal(mask, desk.grid, desk.pmap).m)[None, :]
    return project_sum(G2Matrix(desk.grid, np.abs(A @ g.psi @ A.T) ** 2), sum_coordinate_map(desk.grid))


def macropixels(n: int = 32, sizes=(8, 16, 32), corr_len: float = 2.0, seed: int = 1,
                max_steps: int = 4000, opt_seed: int = 0) -> StudyResult:
    """Same medium, increasing macropixel count; peak metrics of the restored guide."""
    res = StudyResult("macropixels", params={"n": n, "sizes": list(sizes), "seed": seed})
    rows = []
    for m in sizes:
        desk = build_desk(n, m, "thin", corr_len, seed=seed)
        mask, trace = optimize(desk.sm, desk.guide_slm(),
                               OptConfig(m, max_steps=max_steps, seed=opt_seed, psi_tol=1e-9))
        img = pixel_guide_image(desk, mask)
        pm = peak_metrics(img)
        rows.append([m, pm["fwhm_px"], pm["contrast"], pm["center_value"], trace.gain(), len(trace.step)])
        res.images[f"gamma_plus_{m}x{m}"] = img
        res.masks[f"mask_{m}x{m}"] = mask
        res.traces[f"trace_{m}x{m}"] = trace
    desk = build_desk(n, sizes[0], "thin", corr_len, seed=seed)
    res.images["gamma_plus_uncorrected"] = pixel_guide_image(desk, None)
    res.images["gamma_plus_no_medium"] = pixel_guide_image(build_desk(n, sizes[0], "none"), None)
    res.tables["metrics"] = (["macro_n", "fwhm_px", "contrast", "center_value", "gain", "steps"], rows)
    fw = [r[1] for r in rows]
    co = [r[2] for r in rows]
    res.metrics.update({"fwhm": fw, "contrast": co,
                        "fwhm_monotone": bool(all(b <= a + 1e-9 for a, b in zip(fw, fw[1:]))),
                        "contrast_monotone": bool(all(b > a for a, b in zip(co, co[1:])))})
    return res


def sigma_signature(n: int = 32, macro_n: int = 16, corr_len: float = 3.0, seed: int = 1,
                    max_steps: int = 400) -> StudyResult:
    """First-harmonic fraction |a|/|c| for the diagonal and the full guide state."""
    desk = build_desk(n, macro_n, "thin", corr_len, seed=seed)
    res = StudyResult("sigma_signature", params={"n": n, "macro_n": macro_n, "corr_len": corr_len})
    rows = []
    for state in ("diagonal", "guide"):
        st = desk.diagonal_guide_slm() if state == "diagonal" else desk.guide_slm()
        _, trace = optimize(desk.sm, st, OptConfig(macro_n, max_steps=max_steps, seed=seed))
        ab = _ab_ratios(trace)
        res.metrics[f"{state}_ab_max"] = float(ab.max())
        res.metrics[f"{state}_ab_frac"] = float(np.mean(ab >= 1e-2))
        res.metrics[f"{state}_ab_median"] = float(np.median(ab))
        res.traces[state] = trace
        rows += [[state, k, r] for k, r in enumerate(ab)]
    res.tables["ab_ratio"] = (["state", "step", "a_over_c"], rows)
    return res


# -- classical-correlation failure --------------------------------------------

def classical_failure(n: int = 16, seed: int = 0) -> StudyResult:
    """Entangled encoding vs the separable rho_t through one sign solution."""
    grid = make_grid(n)
    _, cfg = paper_default()
    obj = digit_eight(n)
    p0 = SPDCParams(sigma_r=0.0)
    S = sign_solution(np.random.default_rng(seed).standard_normal((n, n)), grid)
    ent = gamma_plus(two_photon(S, input_plane_state(obj, p0, cfg, grid)))
    rho_t = separable_object_ensemble(obj, p0, cfg, grid)
    mix = _gamma_mixed(S, rho_t)
    res = StudyResult("classical_failure", params={"n": n, "seed": seed})
    res.images.update({"entangled": ent, "separable": mix,
                       "separable_no_medium": _gamma_mixed(identity(grid), rho_t)})
    res.metrics.update({"entangled_fidelity": fidelity_ncc(ent, obj.values ** 2),
                        "separable_fidelity": fidelity_ncc(mix, obj.values ** 2),
                        "nontrivial": not is_trivial(S).trivial})
    return res


def separable_convergence(desk: DeskSetup, max_steps: int = 1500, seed: int = 0) -> StudyResult:
    """Optimize with rho_0 and compare with the classical identity mask."""
    sm = desk.sm
    idm = identity_mask(sm)
    mask, trace = optimize(sm, desk.separable_guide_slm(), OptConfig(desk.macro_n, max_steps=max_steps, seed=seed))
    lit = ~idm.unlit
    sd = solution_distance(mask, idm, np.abs(sm.m[0]) * lit)
    res = StudyResult("separable_convergence", params={"macro_n": desk.macro_n, "seed": seed})
    res.masks.update({"optimized_separable": mask, "identity": idm})
    res.traces["trace"] = trace
    res.metrics.update({"circular_std": sd.circular_std, "offset": sd.offset, "gain": trace.gain(),
                        "trivial": is_trivial(desk.full_system(mask), 0.5).trivial})
    return res


def sm11_grid(desk: DeskSetup, mask: PhaseMask, obj: ObjectImage | None = None) -> StudyResult:
    """{entangled, separable rho_t, classical} x {no medium, medium, identity S', optimized S'}."""
    grid = desk.grid
    obj = obj or digit_eight(grid.n)
    p0 = SPDCParams(sigma_r=0.0)
    psi = input_plane_state(obj, p0, desk.cfg, grid)
    rho_t = separable_object_ensemble(obj, p0, desk.cfg, grid)
    none = build_desk(grid.n, desk.macro_n, "none", pitch=grid.pitch, p=desk.p, cfg=desk.cfg)
    systems = {"no_medium": none.full_system(), "medium": desk.full_system(),
               "identity": desk.full_system(identity_mask(desk.sm)), "optimized": desk.full_system(mask)}
    res = StudyResult("sm11", params={"n": grid.n, "macro_n": desk.macro_n})
    truth = obj.values ** 2
    rows = []
    for sname, S in systems.items():
        ent = gamma_plus(two_photon(S, psi))
        mix = _gamma_mixed(S, rho_t)
        cls = _intensity(S, obj)
        res.images[f"entangled_{sname}"] = ent
        res.images[f"separable_{sname}"] = mix
        res.images[f"classical_{sname}"] = cls
        rows.append([sname, fidelity_ncc(ent, truth), fidelity_ncc(mix, truth), fidelity_ncc(cls, obj.values),
                     str(is_trivial(S, 0.5))])
    res.tables["fidelity"] = (["system", "entangled", "separable", "classical", "triviality_tol0.5"], rows)
    return res


# -- solution multiplicity ------------------------------------------------------

def multiplicity(desk: DeskSetup, seeds=range(10), max_steps: int = 800) -> StudyResult:
    sm = desk.sm
    idm = identity_mask(sm)
    w = np.abs(sm.m[0]) * ~idm.unlit
    masks, seps, trivial, rows = [], [], [], []
    res = StudyResult("multiplicity", params={"seeds": list(seeds), "max_steps": max_steps})
    for s in seeds:
        mask, trace = optimize(sm, desk.guide_slm(), OptConfig(desk.macro_n, max_steps=max_steps, seed=s))
        sd = solution_distance(mask, idm, w)
        masks.append(mask)
        seps.append(sd.separation)
        trivial.append(is_trivial(desk.full_system(mask), 0.5).trivial)
        rows.append([s, sd.separation, sd.mu1, sd.mu2, sd.weights[0], sd.weights[1], trace.gain(), trivial[-1]])
        res.masks[f"optimized_seed{s}"] = mask
        if s == list(seeds)[0]:
            res.tables["histogram_seed%d" % s] = (["bin_center", "weight"],
                                                  [[0.5 * (a + b), c] for a, b, c in
                                                   zip(sd.edges[:-1], sd.edges[1:], sd.counts)])
    corr = []
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            corr.append(solution_distance(masks[i], masks[j], w).correlation)
    res.masks["identity"] = idm
    res.tables["separations"] = (["seed", "separation", "mu1", "mu2", "w1", "w2", "gain", "trivial"], rows)
    res.metrics.update({"separations": seps, "mean_separation": float(np.mean(seps)),
                        "max_pair_correlation": float(max(corr)) if corr else 0.0,
                        "any_trivial": bool(any(trivial))})
    return res


# -- measurement and events -----------------------------------------------------

def tm_measurement(n: int = 16, macro_n: int = 8, corr_len: float = 2.0, seed: int = 0,
                   phase_steps: int = 4) -> StudyResult:
    """Noiseless Hadamard phase-shifting measurement of F S0 against the truth."""
    grid = make_grid(n)
    _, cfg = paper_default()
    truth = compose([fourier_lens(grid, cfg.f5, cfg.lam), thin_medium(grid, SpeckleSpec(corr_len, seed=seed))])
    ref = border_reference(grid, macro_n, macro_n)
    tm = hadamard_to_pixel(measure_tm(truth, ref, macro_n, phase_steps, active=macro_n))
    err = tm_error(tm, truth)
    res = StudyResult("tm", params={"n": n, "macro_n": macro_n, "phase_steps": phase_steps, "seed": seed})
    res.images["measured_amplitude"] = np.abs(tm.m)
    res.images["measured_phase"] = np.mod(np.angle(tm.m), 2 * np.pi)
    res.metrics["relative_error"] = err
    res.params["matrix"] = tm
    return res


def event_pipeline(n: int = 32, pairs: float = 1e5, duration: float = 10.0, noise_rate: float = 1e5,
                   jitter_ns: float = 1.0, window_ns: float = 6.0, seed: int = 0,
                   accidental_seeds: int = 50) -> StudyResult:
    grid = make_grid(n)
    _, cfg = paper_default()
    obj = digit_eight(n)
    g2 = g2_from_pure(input_plane_state(obj, SPDCParams(sigma_r=0.0), cfg, grid))
    cmap = sum_coordinate_map(grid)
    analytic = project_sum(g2, cmap)
    ev = synthesize_events(g2, pairs / duration, noise_rate, duration, jitter_ns, seed)
    pc = pair_coincidences(ev, window_ns)
    acc = accidental_map(ev, cmap, window_ns)
    img = corr_image_from_events(pc, acc, cmap)
    res = StudyResult("events", params={"pairs": pairs, "duration_s": duration, "noise_rate": noise_rate,
                                        "window_ns": window_ns, "seed": seed})
    res.images.update({"raw": raw_coincidence_image(pc, cmap), "accidentals": acc, "subtracted": img,
                       "subtracted_unclamped": corr_image_from_events(pc, acc, cmap, clamp=False),
                       "analytic": analytic})
    ratios = []
    for s in range(accidental_seeds):
        e = synthesize_events(g2, 0.0, noise_rate, 1.0, jitter_ns, seed=10_000 + s)
        ratios.append(len(pair_coincidences(e, window_ns)) / expected_accidentals(e, window_ns))
    res.metrics.update({"ncc": fidelity_ncc(img, analytic), "events": len(ev), "pairs": len(pc),
                        "expected_accidentals": acc.meta["expected_accidentals"],
                        "accidental_ratio_mean": float(np.mean(ratios))})
    return res


# -- difference-coordinate encoding ---------------------------------------------

def difference_encoding(n: int = 16, seed: int = 0) -> StudyResult:
    grid = make_grid(n)
    obj = inversion_symmetric(digit_eight(n))
    psi = difference_encoded_state(obj, SPDCParams(sigma_r=13e-6, sigma_k=0.0), grid)
    S = pcp_solution(odd_phase_symbol(grid, np.random.default_rng(seed)), grid)
    out = two_photon(S, psi)
    g2 = g2_from_pure(out)
    gm = project_diff(g2, sum_coordinate_map(grid, sign="difference"))
    gp = project_sum(g2, sum_coordinate_map(grid))
    truth = obj.values ** 2
    res = StudyResult("difference", params={"n": n, "seed": seed})
    res.images.update({"gamma_minus_out": gm, "gamma_plus_out": gp})
    gmc = gm.centered()
    res.metrics.update({"max_rel_error": float(np.max(np.abs(gmc / gmc.max() - truth))),
                        "gamma_plus_fidelity": fidelity_ncc(gp, truth),
                        "nontrivial": not is_trivial(S).trivial})
    return res


# -- object through the tailored desk system --------------------------------------

def object_through_desk(desk: DeskSetup, mask: PhaseMask, obj: ObjectImage | None = None,
                        sigma_r: float = 0.0) -> StudyResult:
    """Gamma+ and singles of the encoded object: no medium, medium, tailored."""
    grid = desk.grid
    obj = obj or digit_eight(grid.n)
    p = SPDCParams(lambda_p=desk.p.lambda_p, sigma_r=sigma_r, sigma_k=desk.p.sigma_k)
    psi = input_plane_state(obj, p, desk.cfg, grid)
    none = build_desk(grid.n, desk.macro_n, "none", pitch=grid.pitch, p=desk.p, cfg=desk.cfg)
    res = StudyResult("object", params={"sigma_r": sigma_r})
    truth = obj.values ** 2
    for name, S in (("no_medium", none.full_system()), ("medium", desk.full_system()),
                    ("tailored", desk.full_system(mask))):
        out = two_photon(S, psi)
        g = gamma_plus(out)
        res.images[f"gamma_plus_{name}"] = g
        res.images[f"intensity_{name}"] = singles_image(out)
        res.metrics[f"fidelity_{name}"] = fidelity_ncc(g, truth)
    return res


def phase_only_medium(grid, corr_len, seed) -> ScatteringMatrix:
    """Thin medium keeping only the speckle phase (random phase plate)."""
    f = speckle_field(grid, SpeckleSpec(corr_len, seed=seed))
    return ScatteringMatrix(np.diag(np.exp(1j * np.angle(f.values))), grid, grid, "thin",
                            {"corr_len": corr_len, "seed": seed, "phase_only": True})


def desk_with_medium(n, macro_n, kind, corr_len, envelope_sigma, seed, pitch=None) -> DeskSetup:
    if kind == "random-phase":
        d = build_desk(n, macro_n, "none", corr_len, seed=seed, **({"pitch": pitch} if pitch else {}))
        d.medium = phase_only_medium(d.grid, corr_len, seed)
        d._sm_pixel = None
        return d
    if kind == "thick-sim":
        kind = "thick"
    return build_desk(n, macro_n, kind, corr_len, envelope_sigma, seed, **({"pitch": pitch} if pitch else {}))
