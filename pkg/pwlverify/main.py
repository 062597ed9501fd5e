"""
FastAPI应用主入口
"""

from fastapi import FastAPI, Request, status
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from pwlverify.errors import VerifierError
from pwlverify.logger import get_logger
from pwlverify.routers import networks, queries, verification

logger = get_logger(__name__)

# 创建FastAPI应用
app = FastAPI(
    title="分段线性神经网络验证服务",
    description="ReLU/MaxPool 网络的性质验证、鲁棒性查询和线性近似导出",
    version="1.0.0",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# 注册路由
app.include_router(verification.router)
app.include_router(queries.router)
app.include_router(networks.router)


@app.get("/")
async def root():
    return {"message": "分段线性神经网络验证服务 API"}


@app.exception_handler(VerifierError)
async def verifier_exception_handler(request: Request, exc: VerifierError):
    """
    验证器异常处理器: 格式错误、预算耗尽、查询参数不一致等都以错误码返回

    Returns:
        JSONResponse: 400，包含 detail 和 code
    """
    logger.warning(
        f"验证请求失败: {exc.code}",
        extra={"path": request.url.path, "code": exc.code, "detail": exc.message}
    )
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": exc.message or exc.code, "code": exc.code}
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """请求体或查询参数不符合模型定义，返回422"""
    errors = jsonable_encoder(exc.errors())
    logger.warning(
        f"请求参数校验失败: {len(errors)}处",
        extra={"path": request.url.path, "fields": [".".join(map(str, e["loc"])) for e in errors]}
    )
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={"detail": errors, "code": "E_VALIDATION"}
    )


@app.exception_handler(Exception)
async def unexpected_exception_handler(request: Request, exc: Exception):
    """求解器内部的意外异常: 记录堆栈并返回500"""
    logger.error(
        f"验证服务内部错误: {exc.__class__.__name__}",
        exc_info=True,
        extra={"path": request.url.path, "method": request.method}
    )
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={"detail": "验证服务内部错误", "code": "E_INTERNAL", "error_type": exc.__class__.__name__}
    )
