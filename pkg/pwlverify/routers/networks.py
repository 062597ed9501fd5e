"""
随机网络路由
"""

from typing import Optional

from fastapi import APIRouter, HTTPException, Query, status
from fastapi.responses import PlainTextResponse
from pydantic import ValidationError

from pwlverify.generator import gen_random_network, gen_random_problem
from pwlverify.schemas import NetworkShape

router = APIRouter(prefix="/api/networks", tags=["networks"])


@router.get("/random", response_class=PlainTextResponse)
def random_network(
    seed: int = Query(0, description="随机种子"),
    inputs: int = Query(2, ge=1, le=64),
    hidden: str = Query("3,3", description="隐层宽度，逗号分隔"),
    maxpools: int = Query(1, ge=0),
    pool_fan_in: int = Query(2, ge=2),
    outputs: int = Query(2, ge=1),
    with_property: Optional[bool] = Query(False, description="是否附带随机输出性质")
):
    """
    生成随机 .pnet 文本，同一组参数总是返回相同的文本

    使用样例:
        GET /api/networks/random?seed=3&hidden=4,4
    """
    try:
        shape = NetworkShape(
            inputs=inputs,
            hidden=[int(w) for w in hidden.split(",") if w.strip()],
            maxpools=maxpools,
            pool_fan_in=pool_fan_in,
            outputs=outputs,
        )
    except (ValidationError, ValueError) as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    if with_property:
        return gen_random_problem(seed, shape)
    return gen_random_network(seed, shape)
