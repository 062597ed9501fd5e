"""
批量测试与Excel报表
在随机语料上运行验证器，与暴力枚举和消融配置交叉检查，并导出为 xlsx
"""

from typing import Iterable, List, Optional

from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill

from pwlverify.errors import VerifierError
from pwlverify.generator import gen_random_problem
from pwlverify.logger import get_logger
from pwlverify.network import parse_problem
from pwlverify.schemas import BenchRow, NetworkShape, VerifierConfig
from pwlverify.verifier import brute_force_oracle, verify

logger = get_logger(__name__)

BENCH_HEADERS = [
    "种子", "结果", "暴力枚举", "一致", "消融一致",
    "LP求解次数", "关闭推断的LP求解次数", "决策次数", "冲突次数", "耗时(秒)"
]
ABLATIONS = ("use_cache", "use_inference", "use_refinement")


def bench_instance(seed: int, shape: Optional[NetworkShape] = None,
                   config: Optional[VerifierConfig] = None) -> BenchRow:
    """
    对单个随机实例运行验证、暴力枚举和三个消融配置

    使用样例:
        row = bench_instance(5)
        assert row.agreement is not False
    """
    config = config or VerifierConfig()
    problem = parse_problem(gen_random_problem(seed, shape))
    result = verify(problem, config)

    oracle_status = None
    try:
        oracle_status = brute_force_oracle(problem, cap=config.oracle_cap, prune=True).status
    except VerifierError as e:
        logger.warning(f"种子 {seed} 跳过暴力枚举: {e.code}", extra={"seed": seed})

    statuses = {}
    no_inference_solves = None
    for switch in ABLATIONS:
        ablated = verify(problem, config.model_copy(update={switch: False}))
        statuses[switch] = ablated.status
        if switch == "use_inference":
            no_inference_solves = ablated.stats.lp_solves

    return BenchRow(
        seed=seed,
        status=result.status,
        oracle_status=oracle_status,
        agreement=None if oracle_status is None else oracle_status == result.status,
        ablation_agreement=all(s == result.status for s in statuses.values()),
        lp_solves=result.stats.lp_solves,
        lp_solves_no_inference=no_inference_solves,
        decisions=result.stats.decisions,
        conflicts=result.stats.sat_conflicts,
        wall_time=result.stats.wall_time,
    )


def run_bench(seeds: Iterable[int], shape: Optional[NetworkShape] = None,
              config: Optional[VerifierConfig] = None) -> List[BenchRow]:
    rows = [bench_instance(seed, shape, config) for seed in seeds]
    disagreements = [r.seed for r in rows if r.agreement is False or r.ablation_agreement is False]
    if disagreements:
        logger.error(f"批量测试出现不一致: {disagreements}", extra={"seeds": disagreements})
    logger.info(f"批量测试完成: {len(rows)}个实例")
    return rows


def bench_workbook(rows: List[BenchRow]) -> Workbook:
    """
    生成批量测试报表，表头样式与订单导出一致，末尾追加总计行

    使用样例:
        bench_workbook(run_bench(range(10))).save("bench.xlsx")
    """
    wb = Workbook()
    ws = wb.active
    ws.title = "批量测试"

    header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
    header_font = Font(bold=True, color="FFFFFF")
    header_alignment = Alignment(horizontal="center", vertical="center")
    for col, header in enumerate(BENCH_HEADERS, 1):
        cell = ws.cell(row=1, column=col, value=header)
        cell.fill = header_fill
        cell.font = header_font
        cell.alignment = header_alignment

    def flag(value: Optional[bool]) -> str:
        if value is None:
            return "-"
        return "是" if value else "否"

    for row, item in enumerate(rows, 2):
        values = [
            item.seed, item.status, item.oracle_status or "-", flag(item.agreement),
            flag(item.ablation_agreement), item.lp_solves,
            item.lp_solves_no_inference if item.lp_solves_no_inference is not None else "-",
            item.decisions, item.conflicts, round(item.wall_time, 4),
        ]
        for col, value in enumerate(values, 1):
            ws.cell(row=row, column=col, value=value)

    # 总计行
    total_row = len(rows) + 3
    ws.cell(row=total_row, column=1, value="总计").font = Font(bold=True)
    ws.cell(row=total_row, column=2, value=f"SAT {sum(r.status == 'SAT' for r in rows)}").font = Font(bold=True)
    ws.cell(row=total_row, column=4, value=sum(r.agreement is True for r in rows)).font = Font(bold=True)
    ws.cell(row=total_row, column=5, value=sum(r.ablation_agreement is True for r in rows)).font = Font(bold=True)
    ws.cell(row=total_row, column=6, value=sum(r.lp_solves for r in rows)).font = Font(bold=True)
    ws.cell(row=total_row, column=8, value=sum(r.decisions for r in rows)).font = Font(bold=True)
    ws.cell(row=total_row, column=9, value=sum(r.conflicts for r in rows)).font = Font(bold=True)
    ws.cell(row=total_row, column=10, value=round(sum(r.wall_time for r in rows), 4)).font = Font(bold=True)

    for letter, width in zip("ABCDEFGHIJ", (8, 8, 10, 8, 10, 12, 20, 10, 10, 10)):
        ws.column_dimensions[letter].width = width
    return wb
