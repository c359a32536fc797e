"""Service layer: the four operations behind both the CLI and the HTTP app.

Everything here is plain request-model-in, response-model-out; transport
(argv, files, HTTP) lives elsewhere. Model state round-trips through JSON so
a fit produced by one process can be served or predicted from by another.
"""

import numpy as np

from ..cvi import (ApproxLikelihoodBank, FitOptions, FitState, FullModelFit,
                   fit, predict)
from ..data import GridDataset, metrics, synthesize
from ..errors import UsageError
from ..kernels import SpatialKernel, build_temporal_ss
from ..likelihoods import Bernoulli, Gaussian, Poisson, nlpd
from ..mean_field import MFModelFit, mf_fit, mf_predict
from ..sparse import (BlockApproxLikelihood, SparseModelFit, init_inducing,
                      sparse_fit, sparse_predict)
from .schemas import (BankState, BenchRequest, BenchResponse, BenchRow,
                      DatasetPayload, FitRequest, FitResponse, Metrics,
                      ModelState, Normalization, PredictRequest,
                      PredictResponse, RunConfig, SimulateRequest,
                      SimulateResponse)


def build_components(cfg: RunConfig):
    """Kernels, likelihood and loop options from a validated config."""
    kt = build_temporal_ss(cfg.temporal_kernel.family,
                           cfg.temporal_kernel.variance,
                           cfg.temporal_kernel.lengthscale)
    ks = SpatialKernel(cfg.spatial_kernel.family,
                       np.asarray(cfg.spatial_kernel.lengthscales, float))
    fam = cfg.likelihood.family
    if fam == "gaussian":
        lik = Gaussian(cfg.likelihood.noise_variance)
    elif fam == "poisson":
        lik = Poisson(cfg.likelihood.binsize)
    else:
        lik = Bernoulli()
    opts = FitOptions(beta=cfg.beta, rho=cfg.rho, iters=cfg.iters,
                      quad_order=cfg.quad_order,
                      filter_mode=cfg.filter_mode)
    return kt, ks, lik, opts


def payload_to_dataset(payload: DatasetPayload) -> GridDataset:
    Y = np.array([[np.nan if v is None else v for v in row]
                  for row in payload.y], float)
    mask = ~np.isnan(Y)
    return GridDataset(np.asarray(payload.t, float),
                       np.asarray(payload.S, float), Y, mask)


def dataset_to_payload(ds: GridDataset) -> DatasetPayload:
    y = [[None if np.isnan(v) else float(v) for v in row] for row in ds.Y]
    return DatasetPayload(t=[float(v) for v in ds.t],
                          S=[[float(v) for v in row] for row in ds.S],
                          y=y)


def _normalization(ds: GridDataset) -> Normalization:
    std = ds.S.std(axis=0)
    std[std == 0] = 1.0
    steps = np.diff(ds.t)
    t_scale = float(np.median(steps)) if steps.size else 1.0
    if t_scale <= 0:
        t_scale = 1.0
    return Normalization(s_mean=[float(v) for v in ds.S.mean(axis=0)],
                         s_std=[float(v) for v in std], t_scale=t_scale)


def _apply_norm(norm, t, S):
    if norm is None:
        return np.asarray(t, float), np.asarray(S, float)
    t = np.asarray(t, float) / norm.t_scale
    S = (np.asarray(S, float) - np.asarray(norm.s_mean)) \
        / np.asarray(norm.s_std)
    return t, S


def _seconds_per_iter(iter_seconds):
    # warm-up iteration excluded from the average
    if len(iter_seconds) > 1:
        return float(np.mean(iter_seconds[1:]))
    return float(iter_seconds[0]) if iter_seconds else 0.0


def _bank_to_state(bank) -> BankState:
    if isinstance(bank, ApproxLikelihoodBank):
        return BankState(kind="site", lam1=bank.lam1.tolist(),
                         lam2=bank.lam2.tolist(),
                         informative=bank.informative.tolist())
    return BankState(kind="block", lam1=bank.lam1.tolist(),
                     lam2=bank.lam2.tolist(),
                     informative=bank.informative.tolist())


def _bank_from_state(bs: BankState):
    if bs.kind == "site":
        return ApproxLikelihoodBank(np.asarray(bs.lam1, float),
                                    np.asarray(bs.lam2, float),
                                    np.asarray(bs.informative, bool))
    return BlockApproxLikelihood(np.asarray(bs.lam1, float),
                                 np.asarray(bs.lam2, float),
                                 np.asarray(bs.informative, bool))


def _resolve_inducing(cfg: RunConfig, S_norm, seed):
    spec = cfg.inducing
    if spec.points is not None:
        Z = np.atleast_2d(np.asarray(spec.points, float))
        if Z.shape[1] != S_norm.shape[1]:
            raise UsageError(
                f"inducing points have {Z.shape[1]} coordinates but the "
                f"data has {S_norm.shape[1]}")
        return Z
    return init_inducing(S_norm, spec.count, seed=seed)


def do_fit(req: FitRequest) -> FitResponse:
    cfg = req.config
    ds_raw = payload_to_dataset(req.data)
    kt, ks, lik, opts = build_components(cfg)

    norm = _normalization(ds_raw) if cfg.normalize else None
    if norm is not None:
        t_n, S_n = _apply_norm(norm, ds_raw.t, ds_raw.S)
        ds = GridDataset(t_n, S_n, ds_raw.Y, ds_raw.mask)
    else:
        ds = ds_raw

    Z = None
    if cfg.variant in ("st-svgp", "mf-st-svgp"):
        # explicit inducing coordinates are given in data units
        if norm is not None and cfg.inducing.points is not None:
            _, Zn = _apply_norm(norm, [0.0], cfg.inducing.points)
            Z = np.atleast_2d(Zn)
        else:
            Z = _resolve_inducing(cfg, ds.S, cfg.seed)

    if cfg.variant == "st-vgp":
        res = fit(ds, kt, ks, lik, opts)
    elif cfg.variant == "st-svgp":
        res = sparse_fit(ds, kt, ks, lik, Z, opts,
                         learn_z=cfg.inducing.optimize)
    elif cfg.variant == "mf-st-vgp":
        res = mf_fit(ds, kt, ks, lik, opts)
    else:
        res = mf_fit(ds, kt, ks, lik, opts, Z=Z)

    state = res.state
    model = ModelState(
        variant=cfg.variant,
        config=cfg,
        hyper_names=list(state.names),
        theta=[float(v) for v in state.theta],
        bank=_bank_to_state(state.bank),
        inducing_points=None if Z is None else
        [[float(v) for v in row] for row in Z],
        normalization=norm,
        train=req.data,
        elbo_trace=[float(v) for v in state.elbo_trace],
        iter_seconds=[float(v) for v in state.iter_seconds])
    return FitResponse(model=model)


def _rebuild(model: ModelState):
    """Reconstruct the fit-result object a predict call expects."""
    cfg = model.config
    kt, ks, lik, opts = build_components(cfg)
    ds = payload_to_dataset(model.train)
    if model.normalization is not None:
        t_n, S_n = _apply_norm(model.normalization, ds.t, ds.S)
        ds = GridDataset(t_n, S_n, ds.Y, ds.mask)
    state = FitState(names=list(model.hyper_names),
                     theta=np.asarray(model.theta, float),
                     bank=_bank_from_state(model.bank),
                     adam_m=np.zeros(len(model.theta)),
                     adam_v=np.zeros(len(model.theta)),
                     iteration=len(model.elbo_trace),
                     elbo_trace=list(model.elbo_trace),
                     iter_seconds=list(model.iter_seconds))
    Z = None if model.inducing_points is None \
        else np.asarray(model.inducing_points, float)
    if model.variant == "st-vgp":
        return FullModelFit(state, ds, kt, ks, lik, opts)
    if model.variant == "st-svgp":
        return SparseModelFit(state, ds, Z, kt, ks, lik, opts)
    return MFModelFit(state, ds, Z, kt, ks, lik, opts)


def do_predict(req: PredictRequest) -> PredictResponse:
    model = req.model
    fitres = _rebuild(model)
    t_q = np.asarray(req.t, float)
    S_q = np.atleast_2d(np.asarray(req.S, float))
    if t_q.size == 0 or S_q.shape[0] == 0:
        raise UsageError("empty prediction query")
    t_n, S_n = _apply_norm(model.normalization, t_q, S_q)

    if model.variant == "st-vgp":
        mean, var = predict(fitres, t_n, S_n)
    elif model.variant == "st-svgp":
        mean, var = sparse_predict(fitres, t_n, S_n)
    else:
        mean, var = mf_predict(fitres, t_n, S_n)

    _, _, lik, _ = build_components(model.config)
    resp = PredictResponse(mean=mean.tolist(), var=var.tolist())
    if req.y is not None:
        Yq = np.array([[np.nan if v is None else v for v in row]
                       for row in req.y], float)
        if Yq.shape != mean.shape:
            raise UsageError(
                f"y grid {Yq.shape} does not match the query grid "
                f"{mean.shape}")
        obs = ~np.isnan(Yq)
        cells = np.full(mean.shape, np.nan)
        if obs.any():
            cells[obs] = nlpd(lik, Yq[obs], mean[obs], var[obs],
                              order=model.config.nlpd_quad_order)
            held = metrics(mean[obs], var[obs], Yq[obs], lik,
                           order=model.config.nlpd_quad_order)
            resp.metrics = Metrics(
                rmse=held["rmse"], nlpd=held["nlpd"],
                elbo_final=model.elbo_trace[-1],
                iters=len(model.elbo_trace),
                seconds_per_iter=_seconds_per_iter(model.iter_seconds))
        resp.nlpd = [[None if np.isnan(v) else float(v) for v in row]
                     for row in cells]
    return resp


def do_simulate(req: SimulateRequest) -> SimulateResponse:
    ds = synthesize(req.kind, req.nt, req.ns, seed=req.seed)
    return SimulateResponse(data=dataset_to_payload(ds))


def do_bench(req: BenchRequest) -> BenchResponse:
    """Sequential timing sweep over N_t (and filter mode)."""
    if not req.nt or any(n < 2 for n in req.nt):
        raise UsageError("bench needs time-grid sizes of at least 2")
    cfg = req.config or RunConfig(rho=0.0, iters=req.iters)
    rows = []
    for mode in req.modes:
        for nt in req.nt:
            ds = synthesize("pseudo_periodic", nt, req.ns, seed=req.seed)
            run_cfg = cfg.model_copy(update={
                "iters": req.iters, "filter_mode": mode})
            kt, ks, lik, opts = build_components(run_cfg)
            if run_cfg.variant == "st-vgp":
                res = fit(ds, kt, ks, lik, opts)
            elif run_cfg.variant == "st-svgp":
                Z = _resolve_inducing(run_cfg, ds.S, run_cfg.seed)
                res = sparse_fit(ds, kt, ks, lik, Z, opts)
            elif run_cfg.variant == "mf-st-vgp":
                res = mf_fit(ds, kt, ks, lik, opts)
            else:
                Z = _resolve_inducing(run_cfg, ds.S, run_cfg.seed)
                res = mf_fit(ds, kt, ks, lik, opts, Z=Z)
            secs = res.state.iter_seconds
            rows.append(BenchRow(
                nt=nt, mode=mode, iters=len(secs),
                total_seconds=float(np.sum(secs)),
                seconds_per_iter=_seconds_per_iter(secs)))
    return BenchResponse(rows=rows)
