import logging

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
import uvicorn

from config.settings import settings
from models.events import PatternKind
from models.schemas import AnalysisSummary, EstimateTimeRequest, ExperimentConfig, KpRequest, KpResponse, TimeEstimate
from services.atomic import export_script, load_script
from services.errors import AtomicityError
from services.experiment import ExperimentRunner, estimate_time

logging.basicConfig(level=settings.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

app = FastAPI(
    title="Atomicity",
    description="Atomic-pattern P-256 scalar multiplication with leakage simulation and simple-SCA analysis",
    version=settings.VERSION
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

runner = ExperimentRunner()


@app.post("/api/v1/kp", response_model=KpResponse)
async def run_kp(request: KpRequest):
    """Compute kP with the atomic patterns and check it against the oracles"""
    try:
        return runner.run_kp(request.scalar, request.point_x, request.point_y)
    except AtomicityError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/api/v1/estimate-time", response_model=TimeEstimate)
async def run_estimate_time(request: EstimateTimeRequest):
    return estimate_time(request.bit_length, request.clock_mhz, request.block_cycles)


@app.get("/api/v1/scripts/{kind}", response_class=PlainTextResponse)
async def get_script(kind: PatternKind):
    """Atomic script as a text table"""
    return export_script(load_script(kind))


@app.post("/api/v1/experiments/run", response_model=AnalysisSummary)
def run_experiment(config: ExperimentConfig):
    """Simulate a trace for the configuration and analyze it"""
    try:
        return runner.run_experiment(config).summary
    except AtomicityError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "message": "Atomicity is running"}


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "Atomicity - atomic patterns under simple SCA",
        "version": settings.VERSION,
        "endpoints": {
            "kp": "/api/v1/kp",
            "estimate_time": "/api/v1/estimate-time",
            "scripts": "/api/v1/scripts/{kind}",
            "experiments": "/api/v1/experiments/run",
            "health": "/health"
        }
    }

if __name__ == "__main__":
    uvicorn.run(
        "main:app",
        host=settings.API_HOST,
        port=settings.API_PORT,
        reload=False
    )
