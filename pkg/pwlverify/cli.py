"""
命令行入口
子命令: verify, margin, strongclass, smoothnoise, boundednoise, oracle, export, gen, bench, serve
退出码: SAT 为 10，UNSAT 为 20，出错为 1，其余命令成功为 0
"""

import argparse
import json
import sys
from typing import List, Optional

from pydantic import ValidationError

from pwlverify.config import (
    BOUNDED_NOISE_DEFAULT_AMPLITUDE, DEFAULT_TIME_BUDGET, EXIT_ERROR, EXIT_SAT, EXIT_UNSAT,
    MARGIN_DEFAULT_HI, MARGIN_DEFAULT_LO, MARGIN_DEFAULT_PRECISION, NOISE_DEFAULT_BORDER,
    ORACLE_CAP, SERVER_HOST, SERVER_PORT, SMOOTH_NOISE_DEFAULT_BOUND
)
from pwlverify.errors import VerifierError
from pwlverify.generator import gen_random_network, gen_random_problem, random_shape
from pwlverify.logger import get_logger
from pwlverify.network import check_witness, parse_network, parse_problem
from pwlverify.queries import (
    boundednoise_property, margin_query, smoothnoise_property, strongclass_property
)
from pwlverify.relaxation import export_lp, exportable_relaxation
from pwlverify.report import bench_workbook, run_bench
from pwlverify.schemas import (
    BoundedNoiseQuery, MarginQuery, NetworkShape, SmoothNoiseQuery, StrongClassQuery,
    VerificationReport, VerificationResult, VerifierConfig
)
from pwlverify.utils import format_vector, load_vector, parse_box, read_text, write_text
from pwlverify.verifier import brute_force_oracle, verify

logger = get_logger(__name__)


def _exit_code(result: VerificationResult) -> int:
    return EXIT_SAT if result.satisfiable else EXIT_UNSAT


def _config(args) -> VerifierConfig:
    return VerifierConfig(
        time_budget=args.time_budget,
        conflict_budget=args.conflict_budget,
        use_cache=not args.no_cache,
        use_inference=not args.no_inference,
        use_refinement=not args.no_refine,
    )


def _print_stats(result: VerificationResult):
    pairs = " ".join(f"{k}={v}" for k, v in result.stats.model_dump().items())
    print(f"stats: {pairs}")


def _report(args, problem, result: VerificationResult, width: Optional[int] = None) -> int:
    """按 --json / --stats / --oracle 打印结果并返回退出码"""
    report = VerificationReport(status=result.status, witness=result.witness, stats=result.stats)
    if result.witness is not None:
        report.witness_valid = check_witness(problem, result.witness)
    if getattr(args, "oracle", False):
        try:
            oracle = brute_force_oracle(problem, cap=args.cap)
            report.oracle_status = oracle.status
            report.agreement = oracle.status == result.status
        except VerifierError as e:
            print(f"oracle skipped: {e}", file=sys.stderr)

    if args.json:
        print(report.model_dump_json())
        return _exit_code(result)

    print(result.status)
    if result.witness is not None:
        if width:
            print("witness:")
            for start in range(0, len(result.witness), width):
                print("  " + format_vector(result.witness[start:start + width]))
        else:
            print(f"witness: {format_vector(result.witness)}")
    if report.oracle_status is not None:
        print(f"oracle: {report.oracle_status}")
        print(f"agreement: {'yes' if report.agreement else 'no'}")
    if args.stats:
        _print_stats(result)
    return _exit_code(result)


# ---------- 子命令 ----------

def cmd_verify(args) -> int:
    problem = parse_problem(read_text(args.path))
    result = verify(problem, _config(args))
    return _report(args, problem, result)


def cmd_margin(args) -> int:
    query = MarginQuery(
        base=load_vector(args.base),
        lo=args.lo,
        hi=args.hi,
        precision=args.precision,
        expected_class=args.expected_class,
        frozen=[int(i) for i in args.frozen.split(",")] if args.frozen else [],
        grid_width=args.width,
        grid_height=args.height,
        border=args.border,
    )
    problem = parse_network(read_text(args.path))
    result = margin_query(problem, query, _config(args))
    if args.json:
        print(result.model_dump_json())
        return 0
    print(f"base class: {result.base_class}")
    if result.robust_at_hi:
        print(f"robust at {result.epsilon:g}")
    else:
        print(f"epsilon: {result.epsilon:.6f}")
        counter = next((p for p in reversed(result.probes) if not p.robust), None)
        if counter is not None and counter.counterexample is not None:
            print(f"counterexample (eps={counter.epsilon:.6f}, class {counter.competitor}): "
                  f"{format_vector(counter.counterexample)}")
    if args.stats:
        print(f"probes: {len(result.probes)}")
    return 0


def cmd_strongclass(args) -> int:
    query = StrongClassQuery(
        target_class=args.target_class,
        delta=args.delta,
        box=parse_box(args.box) if args.box else None,
    )
    problem = strongclass_property(parse_network(read_text(args.path)), query)
    return _report(args, problem, verify(problem, _config(args)))


def cmd_smoothnoise(args) -> int:
    query = SmoothNoiseQuery(
        base=load_vector(args.base), width=args.width, height=args.height,
        bound=args.bound, border=args.border, target_class=args.target,
    )
    problem = smoothnoise_property(parse_network(read_text(args.path)), query)
    return _report(args, problem, verify(problem, _config(args)), width=args.width)


def cmd_boundednoise(args) -> int:
    query = BoundedNoiseQuery(
        base=load_vector(args.base), width=args.width, height=args.height,
        amplitude=args.amplitude, border=args.border, target_class=args.target,
    )
    problem = boundednoise_property(parse_network(read_text(args.path)), query)
    return _report(args, problem, verify(problem, _config(args)), width=args.width)


def cmd_oracle(args) -> int:
    problem = parse_problem(read_text(args.path))
    result = brute_force_oracle(problem, cap=args.cap, prune=args.prune)
    if args.json:
        print(result.model_dump_json())
        return _exit_code(result)
    print(result.status)
    if result.witness is not None:
        print(f"witness: {format_vector(result.witness)}")
    print(f"fixtures: {result.stats.fixtures_enumerated}")
    return _exit_code(result)


def cmd_export(args) -> int:
    problem = parse_problem(read_text(args.path))
    lp = exportable_relaxation(problem, refine=not args.no_refine)
    text = export_lp(lp)
    if args.output:
        write_text(args.output, text)
    else:
        sys.stdout.write(text)
    print(f"constraints: {lp.row_count()}", file=sys.stderr)
    return 0


def _shape(args) -> Optional[NetworkShape]:
    if args.hidden is None:
        return None
    return NetworkShape(
        inputs=args.inputs,
        hidden=[int(w) for w in args.hidden.split(",")],
        maxpools=args.maxpools,
        pool_fan_in=args.fan_in,
        outputs=args.outputs,
        constraints=args.constraints,
    )


def cmd_gen(args) -> int:
    shape = _shape(args)
    if args.problem:
        text = gen_random_problem(args.seed, shape)
    else:
        text = gen_random_network(args.seed, shape or random_shape(args.seed))
    if args.output:
        write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    seeds = range(args.seed, args.seed + args.count)
    rows = run_bench(seeds, _shape(args), _config(args))
    bench_workbook(rows).save(args.output)
    for row in rows:
        print(
            f"{row.seed}\t{row.status}\toracle={row.oracle_status or '-'}\t"
            f"lp={row.lp_solves}\tlp_no_inference={row.lp_solves_no_inference}"
        )
    bad = [r.seed for r in rows if r.agreement is False or r.ablation_agreement is False]
    print(f"instances: {len(rows)} disagreements: {len(bad)}")
    return EXIT_ERROR if bad else 0


def cmd_serve(args) -> int:
    import uvicorn
    uvicorn.run("pwlverify.main:app", host=args.host, port=args.port)
    return 0


# ---------- 参数 ----------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--stats", action="store_true", help="打印统计信息")
    common.add_argument("--json", action="store_true", help="输出一行JSON")
    common.add_argument("--time-budget", type=float, default=DEFAULT_TIME_BUDGET, help="时间预算(秒)")
    common.add_argument("--conflict-budget", type=int, default=None, help="冲突次数预算")
    common.add_argument("--no-cache", action="store_true", help="关闭可行组合缓存")
    common.add_argument("--no-inference", action="store_true", help="关闭隐含相位推断")
    common.add_argument("--no-refine", action="store_true", help="关闭界收紧")

    shape = argparse.ArgumentParser(add_help=False)
    shape.add_argument("--seed", type=int, default=0, help="随机种子")
    shape.add_argument("--inputs", type=int, default=2)
    shape.add_argument("--hidden", default=None, help="隐层宽度，如 3,3；缺省按种子随机挑选形状")
    shape.add_argument("--maxpools", type=int, default=1)
    shape.add_argument("--fan-in", type=int, default=2)
    shape.add_argument("--outputs", type=int, default=2)
    shape.add_argument("--constraints", type=int, default=1)

    parser = argparse.ArgumentParser(
        prog="pwlverify",
        description="分段线性神经网络验证器。误分类按 y_j >= y_b (非严格) 判定。"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="验证 .pnet 问题")
    p.add_argument("path")
    p.add_argument("--oracle", action="store_true", help="与暴力枚举交叉检查")
    p.add_argument("--cap", type=int, default=ORACLE_CAP, help="暴力枚举的相位组合上限")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("margin", parents=[common], help="二分搜索安全余量")
    p.add_argument("path")
    p.add_argument("--base", required=True, help="基准点(逗号分隔或CSV文件)")
    p.add_argument("--lo", type=float, default=MARGIN_DEFAULT_LO)
    p.add_argument("--hi", type=float, default=MARGIN_DEFAULT_HI)
    p.add_argument("--precision", type=float, default=MARGIN_DEFAULT_PRECISION)
    p.add_argument("--expected-class", type=int, default=None, help="期望类别(从1开始)")
    p.add_argument("--frozen", default="", help="固定的输入下标(从0开始)，如 0,3")
    p.add_argument("--width", type=int, default=None, help="网格宽度")
    p.add_argument("--height", type=int, default=None, help="网格高度")
    p.add_argument("--border", type=int, default=0, help="网格边框宽度")
    p.set_defaults(handler=cmd_margin)

    p = sub.add_parser("strongclass", parents=[common], help="δ-强分类查询")
    p.add_argument("path")
    p.add_argument("--class", dest="target_class", type=int, required=True, help="目标类别(从1开始)")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--box", default=None, help="输入区间 l1:u1,l2:u2，缺省使用文件中的约束")
    p.set_defaults(handler=cmd_strongclass)

    for name, handler, noise_flag, default in (
        ("smoothnoise", cmd_smoothnoise, "--bound", SMOOTH_NOISE_DEFAULT_BOUND),
        ("boundednoise", cmd_boundednoise, "--amplitude", BOUNDED_NOISE_DEFAULT_AMPLITUDE),
    ):
        p = sub.add_parser(name, parents=[common], help=f"{name} 噪声查询")
        p.add_argument("path")
        p.add_argument("--base", required=True, help="基准图像(按行展开，逗号分隔或CSV文件)")
        p.add_argument("--width", type=int, required=True)
        p.add_argument("--height", type=int, required=True)
        p.add_argument(noise_flag, type=float, default=default)
        p.add_argument("--border", type=int, default=NOISE_DEFAULT_BORDER)
        p.add_argument("--target", type=int, required=True, help="目标类别(从1开始)")
        p.set_defaults(handler=handler)

    p = sub.add_parser("oracle", parents=[common], help="暴力枚举全部相位组合")
    p.add_argument("path")
    p.add_argument("--cap", type=int, default=ORACLE_CAP)
    p.add_argument("--prune", action="store_true", help="剪掉不可行的部分组合")
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser("export", parents=[common], help="导出线性近似为 LP 文件")
    p.add_argument("path")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("gen", parents=[shape], help="生成随机网络")
    p.add_argument("--problem", action="store_true", help="附带随机输出性质")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("bench", parents=[common, shape], help="随机语料批量测试并导出 xlsx")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("-o", "--output", default="bench.xlsx")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("serve", help="启动HTTP服务")
    p.add_argument("--host", default=SERVER_HOST)
    p.add_argument("--port", type=int, default=SERVER_PORT)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    解析命令行并执行子命令

    Returns:
        int: 退出码

    使用样例:
        sys.exit(main(["verify", "net.pnet", "--stats"]))
    """
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except VerifierError as e:
        logger.warning(f"命令执行失败: {e}", extra={"command": args.command, "code": e.code})
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except ValidationError as e:
        print(f"error: E_PARSE: {json.dumps(e.errors(include_url=False), ensure_ascii=False, default=str)}",
              file=sys.stderr)
        return EXIT_ERROR
