"""HTTP face of the service layer.

Error mapping: usage errors 400, data errors 422, numerical failures 500;
bodies carry {"detail": {"kind", "message"}} so clients can recover the
error family without parsing text.
"""

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..errors import DataError, StgpError, UsageError
from . import service
from .schemas import (BenchRequest, BenchResponse, FitRequest, FitResponse,
                      PredictRequest, PredictResponse, SimulateRequest,
                      SimulateResponse)

app = FastAPI(title="stgp", version="0.1.0")


def _error_kind(exc: StgpError):
    if isinstance(exc, UsageError):
        return "usage", 400
    if isinstance(exc, DataError):
        return "data", 422
    return "numerical", 500


@app.exception_handler(StgpError)
async def _stgp_error(request: Request, exc: StgpError):
    kind, status = _error_kind(exc)
    return JSONResponse(status_code=status,
                        content={"detail": {"kind": kind,
                                            "message": str(exc)}})


@app.exception_handler(RequestValidationError)
async def _validation_error(request: Request, exc: RequestValidationError):
    return JSONResponse(status_code=400,
                        content={"detail": {"kind": "usage",
                                            "message": str(exc)}})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/fit", response_model=FitResponse)
def fit_endpoint(req: FitRequest):
    return service.do_fit(req)


@app.post("/predict", response_model=PredictResponse,
          response_model_exclude_none=True)
def predict_endpoint(req: PredictRequest):
    return service.do_predict(req)


@app.post("/simulate", response_model=SimulateResponse)
def simulate_endpoint(req: SimulateRequest):
    return service.do_simulate(req)


@app.post("/bench", response_model=BenchResponse)
def bench_endpoint(req: BenchRequest):
    return service.do_bench(req)
