"""Command-line client for the service layer.

By default every command runs in-process; --server http://host:port sends
the same request to a running `stgp serve` instance instead. Outputs are
written atomically (temp file + rename) so failures never leave partial
artifacts behind. Exit codes: 0 success, 1 usage, 2 data, 3 numerical.
"""

import argparse
import csv
import json
import os
import sys
import tempfile

import numpy as np
from pydantic import ValidationError

from .data import load_csv
from .errors import DataError, NumericalError, StgpError, UsageError

_EXIT = {"usage": 1, "data": 2, "numerical": 3}


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route through our scheme
    def error(self, message):
        raise UsageError(message)


def _kind(exc: StgpError):
    if isinstance(exc, UsageError):
        return "usage"
    if isinstance(exc, DataError):
        return "data"
    return "numerical"


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Client:
    """Dispatches requests either in-process or to a remote server."""

    def __init__(self, server=None):
        self.server = server.rstrip("/") if server else None

    def call(self, op, request, response_cls):
        if self.server is None:
            from .api import service
            return getattr(service, f"do_{op}")(request)
        import httpx
        r = httpx.post(f"{self.server}/{op}",
                       json=request.model_dump(), timeout=None)
        if r.status_code >= 400:
            detail = {}
            try:
                detail = r.json().get("detail", {})
            except ValueError:
                pass
            kind = detail.get("kind", "numerical")
            msg = detail.get("message", f"server returned {r.status_code}")
            exc = {"usage": UsageError, "data": DataError}.get(
                kind, NumericalError)
            raise exc(msg)
        return response_cls.model_validate(r.json())


def _dataset_payload(path):
    from .api.service import dataset_to_payload
    return dataset_to_payload(load_csv(path))


def _load_config(path):
    from .api.schemas import RunConfig
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise UsageError(f"bad config field {loc}: {first['msg']}")


def _cmd_fit(args, client):
    from .api.schemas import FitRequest, FitResponse
    cfg = _load_config(args.config)
    req = FitRequest(config=cfg, data=_dataset_payload(args.data))
    resp = client.call("fit", req, FitResponse)
    _atomic_write(args.out, resp.model.model_dump_json(indent=2))
    trace = resp.model.elbo_trace
    print(f"fit: {cfg.variant}, {len(trace)} iters, "
          f"elbo {trace[0]:.6g} -> {trace[-1]:.6g}, wrote {args.out}")
    return 0


def _cmd_predict(args, client):
    from .api.schemas import ModelState, PredictRequest, PredictResponse
    try:
        with open(args.model) as fh:
            model = ModelState.model_validate(json.load(fh))
    except FileNotFoundError:
        raise UsageError(f"model file not found: {args.model}")
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataError(f"unreadable model state: {e}")

    query = load_csv(args.data)
    y = None
    if query.mask.any():
        y = [[None if np.isnan(v) else float(v) for v in row]
             for row in query.Y]
    req = PredictRequest(model=model,
                         t=[float(v) for v in query.t],
                         S=[[float(v) for v in row] for row in query.S],
                         y=y)
    resp = client.call("predict", req, PredictResponse)

    mean = np.asarray(resp.mean)
    var = np.asarray(resp.var)
    with_nlpd = resp.nlpd is not None
    ds_dim = query.S.shape[1]
    rows = [["t"] + [f"s{i + 1}" for i in range(ds_dim)]
            + ["mean", "var"] + (["nlpd"] if with_nlpd else [])]
    for n in range(query.num_steps):
        for k in range(query.num_sites):
            row = [repr(float(query.t[n]))] \
                + [repr(float(v)) for v in query.S[k]] \
                + [repr(float(mean[n, k])), repr(float(var[n, k]))]
            if with_nlpd:
                cell = resp.nlpd[n][k]
                row.append("" if cell is None else repr(float(cell)))
            rows.append(row)
    _atomic_write(args.out, "\n".join(",".join(r) for r in rows) + "\n")

    if resp.metrics is not None:
        mpath = args.metrics or args.out + ".metrics.json"
        _atomic_write(mpath, resp.metrics.model_dump_json(indent=2) + "\n")
        print(f"predict: wrote {args.out}; rmse {resp.metrics.rmse:.6g}, "
              f"nlpd {resp.metrics.nlpd:.6g} -> {mpath}")
    else:
        print(f"predict: wrote {args.out}")
    return 0


def _cmd_simulate(args, client):
    from .api.schemas import SimulateRequest, SimulateResponse
    from .api.service import payload_to_dataset
    from .data import save_csv
    req = SimulateRequest(kind=args.kind, nt=args.nt, ns=args.ns,
                          seed=args.seed)
    resp = client.call("simulate", req, SimulateResponse)
    ds = payload_to_dataset(resp.data)
    d = os.path.dirname(os.path.abspath(args.out)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".part")
    os.close(fd)
    try:
        save_csv(tmp, ds)
        os.replace(tmp, args.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    print(f"simulate: {args.kind} {args.nt}x{args.ns} "
          f"({ds.num_observed} observations) -> {args.out}")
    return 0


def _cmd_bench(args, client):
    from .api.schemas import BenchRequest, BenchResponse
    try:
        nt = [int(v) for v in args.nt.split(",") if v]
    except ValueError:
        raise UsageError(f"--nt wants comma-separated integers, got {args.nt!r}")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    cfg = _load_config(args.config) if args.config else None
    req = BenchRequest(nt=nt, ns=args.ns, modes=modes, iters=args.iters,
                       config=cfg, seed=args.seed)
    try:
        req = BenchRequest.model_validate(req.model_dump())
    except ValidationError as e:
        raise UsageError(str(e.errors()[0]["msg"]))
    resp = client.call("bench", req, BenchResponse)

    lines = ["nt,mode,iters,total_seconds,seconds_per_iter"]
    for row in resp.rows:
        lines.append(f"{row.nt},{row.mode},{row.iters},"
                     f"{row.total_seconds:.6f},{row.seconds_per_iter:.6f}")
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"bench: wrote {args.out}")
    return 0


def _cmd_serve(args, client):
    import uvicorn

    from .api.app import app
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    p = _Parser(prog="stgp",
                description="State-space spatio-temporal GP inference")
    p.add_argument("--server", default=os.environ.get("STGP_SERVER"),
                   help="base URL of a running `stgp serve` instance; "
                        "default is in-process execution")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="train a model from a config + CSV")
    f.add_argument("--config", required=True, help="JSON run configuration")
    f.add_argument("--data", required=True, help="training CSV (t,s...,y)")
    f.add_argument("--out", required=True, help="model state JSON to write")
    f.set_defaults(func=_cmd_fit)

    q = sub.add_parser("predict", help="predict at the points of a CSV")
    q.add_argument("--model", required=True, help="model state JSON from fit")
    q.add_argument("--data", required=True,
                   help="query CSV; y column optional, enables nlpd/metrics")
    q.add_argument("--out", required=True, help="predictions CSV to write")
    q.add_argument("--metrics", default=None,
                   help="metrics JSON path (default: <out>.metrics.json)")
    q.set_defaults(func=_cmd_predict)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--kind", default="pseudo_periodic",
                   choices=["pseudo_periodic", "lgcp_counts"])
    s.add_argument("--nt", type=int, default=100)
    s.add_argument("--ns", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="CSV to write")
    s.set_defaults(func=_cmd_simulate)

    b = sub.add_parser("bench", help="time fits over a sweep of N_t")
    b.add_argument("--nt", required=True,
                   help="comma-separated time-grid sizes, e.g. 100,200,400")
    b.add_argument("--ns", type=int, default=5)
    b.add_argument("--modes", default="sequential",
                   help="comma-separated filter modes to sweep")
    b.add_argument("--iters", type=int, default=3)
    b.add_argument("--config", default=None,
                   help="optional run config overriding the bench default")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="timing table CSV to write")
    b.set_defaults(func=_cmd_bench)

    v = sub.add_parser("serve", help="run the HTTP service")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.set_defaults(func=_cmd_serve)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        client = _Client(args.server)
        return args.func(args, client)
    except StgpError as e:
        kind = _kind(e)
        line = json.dumps({"error": {"kind": kind, "message": str(e)}})
        print(line, file=sys.stderr)
        return _EXIT[kind]


if __name__ == "__main__":
    sys.exit(main())
