"""
日志配置模块
控制台输出到stderr，日志文件按天滚动；调用处通过 extra 传入的字段以 key=value 追加在消息后
"""

import logging
import sys
from datetime import datetime

from pwlverify.config import LOG_CONSOLE_LEVEL, LOG_DIR, LOG_TO_FILE

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# LogRecord 自带的属性，其余属性都来自 extra
_RESERVED = set(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


class ExtraFormatter(logging.Formatter):
    """在标准格式之后追加 extra 字段"""

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        fields = {k: v for k, v in vars(record).items() if k not in _RESERVED}
        if fields:
            text += " | " + " ".join(f"{k}={v}" for k, v in sorted(fields.items()))
        return text


def _file_handler(prefix: str, level: int) -> logging.Handler:
    handler = logging.FileHandler(
        LOG_DIR / f"{prefix}_{datetime.now().strftime('%Y%m%d')}.log",
        encoding="utf-8"
    )
    handler.setLevel(level)
    handler.setFormatter(ExtraFormatter(LOG_FORMAT, DATE_FORMAT))
    return handler


# 配置根日志记录器
logger = logging.getLogger("pwlverify")
logger.setLevel(logging.DEBUG)

# 避免重复添加handler
if not logger.handlers:
    # 命令行结果走stdout，日志只走stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, LOG_CONSOLE_LEVEL, logging.WARNING))
    console_handler.setFormatter(ExtraFormatter(LOG_FORMAT, DATE_FORMAT))
    logger.addHandler(console_handler)

    if LOG_TO_FILE:
        try:
            LOG_DIR.mkdir(parents=True, exist_ok=True)
            logger.addHandler(_file_handler("pwlverify", logging.DEBUG))
            logger.addHandler(_file_handler("error", logging.ERROR))
        except OSError as e:
            logger.warning(f"无法创建日志文件，只输出到控制台: {e}")


def get_logger(name: str = None):
    """
    获取日志记录器

    Args:
        name: 日志记录器名称，默认为调用模块名

    Returns:
        logging.Logger: 日志记录器对象

    使用样例:
        from pwlverify.logger import get_logger
        logger = get_logger(__name__)
        logger.info("开始验证", extra={"inputs": 2})
    """
    if name:
        return logging.getLogger(f"pwlverify.{name}")
    return logger
