import datetime
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response

from scn import __version__
from scn.config import settings
from scn.errors import DataError
from scn.services.run_registry import RunRegistry
from scn.utils.web_logger import get_web_logs, setup_web_logging

logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

# 设置web日志
setup_web_logging()

registry: RunRegistry = RunRegistry()


@asynccontextmanager
async def lifespan(app: FastAPI):
    global registry
    registry = RunRegistry(settings.runs_root)
    logger.info(f"🚀 serving runs from {registry.root}")
    yield
    logger.info("Stopped run dashboard")


app = FastAPI(
    title="Siamese Capsule Network Runs",
    description="Browse training runs, metrics, distance densities and loss curves",
    version=__version__,
    lifespan=lifespan,
)


def _not_found(e: DataError) -> HTTPException:
    return HTTPException(status_code=404, detail=str(e))


@app.get("/api")
async def root():
    return {"message": "Siamese Capsule Network Runs", "status": "running"}


@app.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "runs_dir": str(registry.root),
        "runs_dir_exists": registry.root.is_dir(),
    }


@app.get("/runs")
async def list_runs():
    runs = [run.to_dict() for run in registry.list_runs()]
    return {"runs": runs, "total_count": len(runs)}


@app.get("/runs/{name}/metrics")
async def run_metrics(name: str):
    try:
        return {"name": name, "metrics": registry.metrics(name)}
    except DataError as e:
        raise _not_found(e)


@app.get("/runs/{name}/density")
async def run_density(name: str):
    try:
        return {"name": name, "bins": registry.density(name)}
    except DataError as e:
        raise _not_found(e)


@app.get("/runs/{name}/plot")
async def run_plot(name: str):
    try:
        svg = registry.plot(name)
    except DataError as e:
        raise _not_found(e)
    return Response(content=svg.read_bytes(), media_type="image/svg+xml")


@app.get("/logs")
async def get_logs():
    """获取系统日志"""
    web_logs = get_web_logs()

    # 如果没有日志，添加一些状态信息
    if not web_logs:
        now = datetime.datetime.now().strftime("%H:%M:%S")
        web_logs = [f"[{now}] INFO: 服务已启动，等待请求..."]

    return {
        "logs": web_logs,
        "timestamp": datetime.datetime.now().strftime("%H:%M:%S"),
    }
