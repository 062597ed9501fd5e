"""
验证路由
"""

import io
from urllib.parse import quote

from fastapi import APIRouter
from fastapi.responses import StreamingResponse

from pwlverify.errors import VerifierError
from pwlverify.logger import get_logger
from pwlverify.network import check_witness, parse_problem
from pwlverify.relaxation import export_lp, exportable_relaxation
from pwlverify.schemas import ExportRequest, OracleRequest, VerificationReport, VerifyRequest
from pwlverify.verifier import brute_force_oracle, verify

logger = get_logger(__name__)

router = APIRouter(prefix="/api/verify", tags=["verify"])


@router.post("", response_model=VerificationReport)
def verify_problem(request: VerifyRequest):
    """
    验证 .pnet 问题

    Args:
        request: 问题文本、运行配置，以及是否与暴力枚举交叉检查

    Returns:
        VerificationReport: 结果、证据及统计

    使用样例:
        POST /api/verify
        {"problem": "Input x\\n...", "check_oracle": true}
    """
    problem = parse_problem(request.problem)
    result = verify(problem, request.config)
    report = VerificationReport(status=result.status, witness=result.witness, stats=result.stats)
    if result.witness is not None:
        report.witness_valid = check_witness(problem, result.witness, request.config.tolerance)
    if request.check_oracle:
        try:
            oracle = brute_force_oracle(problem, cap=request.config.oracle_cap, prune=True)
            report.oracle_status = oracle.status
            report.agreement = oracle.status == result.status
        except VerifierError as e:
            logger.warning(f"跳过暴力枚举: {e.code}", extra={"code": e.code})
    logger.info(
        f"验证完成: {result.status}",
        extra={"lp_solves": result.stats.lp_solves, "agreement": report.agreement}
    )
    return report


@router.post("/oracle", response_model=VerificationReport)
def oracle_problem(request: OracleRequest):
    """
    暴力枚举全部相位组合

    使用样例:
        POST /api/verify/oracle
        {"problem": "...", "prune": true}
    """
    problem = parse_problem(request.problem)
    result = brute_force_oracle(problem, cap=request.cap, prune=request.prune)
    report = VerificationReport(status=result.status, witness=result.witness, stats=result.stats)
    if result.witness is not None:
        report.witness_valid = check_witness(problem, result.witness)
    return report


@router.post("/export")
def export_problem(request: ExportRequest):
    """
    把(收紧后的)线性近似导出为 LP 文件

    Returns:
        StreamingResponse: LP 文本附件

    使用样例:
        POST /api/verify/export
        {"problem": "...", "refine": true}
    """
    problem = parse_problem(request.problem)
    lp = exportable_relaxation(problem, refine=request.refine)
    text = export_lp(lp)
    logger.info("导出线性近似", extra={"rows": lp.row_count(), "refine": request.refine})

    encoded_filename = quote("relaxation.lp", safe='')
    return StreamingResponse(
        io.BytesIO(text.encode("utf-8")),
        media_type="text/plain; charset=utf-8",
        headers={
            "Content-Disposition": f"attachment; filename*=UTF-8''{encoded_filename}",
            "X-Constraint-Count": str(lp.row_count()),
        }
    )
