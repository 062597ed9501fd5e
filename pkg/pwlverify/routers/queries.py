"""
鲁棒性查询路由
"""

from fastapi import APIRouter

from pwlverify.logger import get_logger
from pwlverify.network import check_witness, parse_network
from pwlverify.queries import (
    boundednoise_property, margin_query, smoothnoise_property, strongclass_property
)
from pwlverify.schemas import (
    BoundedNoiseRequest, MarginRequest, MarginResult, SmoothNoiseRequest,
    StrongClassRequest, VerificationReport
)
from pwlverify.verifier import verify

logger = get_logger(__name__)

router = APIRouter(prefix="/api/queries", tags=["queries"])


def _run(problem, config) -> VerificationReport:
    result = verify(problem, config)
    report = VerificationReport(status=result.status, witness=result.witness, stats=result.stats)
    if result.witness is not None:
        report.witness_valid = check_witness(problem, result.witness, config.tolerance)
    return report


@router.post("/margin", response_model=MarginResult)
def margin(request: MarginRequest):
    """
    二分搜索安全余量

    使用样例:
        POST /api/queries/margin
        {"problem": "...", "query": {"base": [0.52], "precision": 0.002}}
    """
    problem = parse_network(request.problem)
    result = margin_query(problem, request.query, request.config)
    logger.info(
        f"安全余量查询完成: ε={result.epsilon}",
        extra={"probes": len(result.probes), "robust_at_hi": result.robust_at_hi}
    )
    return result


@router.post("/strongclass", response_model=VerificationReport)
def strongclass(request: StrongClassRequest):
    """δ-强分类查询"""
    problem = strongclass_property(parse_network(request.problem), request.query)
    return _run(problem, request.config)


@router.post("/smoothnoise", response_model=VerificationReport)
def smoothnoise(request: SmoothNoiseRequest):
    """平滑噪声查询"""
    problem = smoothnoise_property(parse_network(request.problem), request.query)
    return _run(problem, request.config)


@router.post("/boundednoise", response_model=VerificationReport)
def boundednoise(request: BoundedNoiseRequest):
    """幅度有界噪声查询"""
    problem = boundednoise_property(parse_network(request.problem), request.query)
    return _run(problem, request.config)
