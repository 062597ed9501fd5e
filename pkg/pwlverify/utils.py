"""
工具函数
"""

import os
from typing import List, Sequence

from pwlverify.errors import VerifierError


def read_text(path: str) -> str:
    """
    读取 UTF-8 文本文件

    Args:
        path: 文件路径

    Returns:
        str: 文件内容

    Raises:
        VerifierError: E_IO

    使用样例:
        text = read_text("problems/tiny.pnet")
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise VerifierError("E_IO", f"无法读取文件 {path}: {e}")


def write_text(path: str, content: str):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(content)
    except OSError as e:
        raise VerifierError("E_IO", f"无法写入文件 {path}: {e}")


def parse_vector(text: str) -> List[float]:
    """
    解析逗号或空白分隔的实数向量

    使用样例:
        values = parse_vector("0.1, 0.2,0.3")
    """
    tokens = text.replace(",", " ").split()
    try:
        return [float(token) for token in tokens]
    except ValueError:
        raise VerifierError("E_PARSE", f"无法解析实数向量: {text[:40]}")


def load_vector(argument: str) -> List[float]:
    """参数是已存在的文件时读取其中的 CSV 向量，否则把参数本身当作向量解析"""
    if os.path.isfile(argument):
        return parse_vector(read_text(argument))
    return parse_vector(argument)


def format_vector(values: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def parse_box(text: str) -> List[List[float]]:
    """
    解析输入区间 "l1:u1,l2:u2"

    使用样例:
        box = parse_box("0:1,0:1")
    """
    box = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise VerifierError("E_PARSE", f"区间格式应为 l:u，实际为 '{item}'")
        try:
            box.append([float(parts[0]), float(parts[1])])
        except ValueError:
            raise VerifierError("E_PARSE", f"无法解析区间 '{item}'")
    return box
