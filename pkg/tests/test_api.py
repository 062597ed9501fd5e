"""
HTTP接口测试
"""

import pytest
from fastapi.testclient import TestClient

from pwlverify.main import app
from pwlverify.network import parse_problem

client = TestClient(app)

SAT_PROBLEM = (
    "Input x\n"
    "ReLU y 0.0 1.0 x\n"
    "Assert >= 1.0 1.0 x\n"
    "Assert <= -1.0 1.0 x\n"
    "Assert <= 0.5 1.0 y\n"
)

UNSAT_PROBLEM = SAT_PROBLEM + "Assert >= -0.5 1.0 x\n"

CROSSING_NET = "Input x\nLinear y1 0.0 1.0 x\nLinear y2 1.0 -1.0 x\n"

# 线性近似本身不可行: x∈[0, 1] 而 y = x >= 2
INFEASIBLE_PROBLEM = (
    "Input x\n"
    "Linear y 0.0 1.0 x\n"
    "Assert <= 0.0 1.0 x\n"
    "Assert >= 1.0 1.0 x\n"
    "Assert <= 2.0 1.0 y\n"
)

EMPTY_BOX_PROBLEM = "Input x\nReLU y 0.0 1.0 x\nAssert <= 1.0 1.0 x\nAssert >= 0.0 1.0 x\n"


def test_root():
    """根路径返回服务说明"""
    response = client.get("/")
    assert response.status_code == 200
    assert "message" in response.json()


def test_verify_sat():
    """可满足问题返回证据且证据有效"""
    response = client.post("/api/verify", json={"problem": SAT_PROBLEM})
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == "SAT"
    assert data["witness_valid"] is True
    assert data["oracle_status"] is None
    assert data["stats"]["lp_solves"] >= 1


def test_verify_with_oracle():
    """与暴力枚举交叉检查"""
    response = client.post("/api/verify", json={
        "problem": UNSAT_PROBLEM,
        "config": {"use_cache": False},
        "check_oracle": True,
    })
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == "UNSAT"
    assert data["witness"] is None
    assert data["oracle_status"] == "UNSAT"
    assert data["agreement"] is True


def test_verify_format_error():
    """格式错误返回400和错误码"""
    response = client.post("/api/verify", json={"problem": "Input x\nReLU y 0.0 1.0 x\n"})
    assert response.status_code == 400
    assert response.json()["code"] == "E_UNBOUNDED_INPUT"

    response = client.post("/api/verify", json={"problem": "Input x\nInput x\n"})
    assert response.status_code == 400
    assert response.json()["code"] == "E_DUPLICATE_ID"


def test_verify_validation_error():
    """请求体校验失败返回422"""
    response = client.post("/api/verify", json={"problem": ""})
    assert response.status_code == 422
    assert response.json()["code"] == "E_VALIDATION"

    response = client.post("/api/verify", json={"problem": SAT_PROBLEM, "config": {"time_budget": -1}})
    assert response.status_code == 422


def test_oracle_endpoint():
    """暴力枚举接口统计枚举的组合数"""
    response = client.post("/api/verify/oracle", json={"problem": UNSAT_PROBLEM})
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == "UNSAT"
    assert data["stats"]["fixtures_enumerated"] == 2

    response = client.post("/api/verify/oracle", json={"problem": UNSAT_PROBLEM, "cap": 1})
    assert response.status_code == 400
    assert response.json()["code"] == "E_TOO_LARGE"


def test_export_endpoint():
    """导出 LP 文本附件"""
    response = client.post("/api/verify/export", json={"problem": SAT_PROBLEM, "refine": False})
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/plain")
    assert response.headers["content-disposition"] == "attachment; filename*=UTF-8''relaxation.lp"
    assert int(response.headers["x-constraint-count"]) >= 1
    assert "Subject To" in response.text

    again = client.post("/api/verify/export", json={"problem": SAT_PROBLEM, "refine": False})
    assert again.text == response.text


@pytest.mark.parametrize("problem", [INFEASIBLE_PROBLEM, EMPTY_BOX_PROBLEM])
def test_export_unsatisfiable_relaxation(problem):
    """近似不可行或输入区间为空时仍然返回 LP 附件"""
    response = client.post("/api/verify/export", json={"problem": problem})
    assert response.status_code == 200
    assert "Subject To" in response.text.splitlines()
    assert int(response.headers["x-constraint-count"]) >= 3


def test_random_network():
    """同一组参数生成相同的网络，形状非法时返回422"""
    params = {"seed": 5, "hidden": "4,2", "maxpools": 1, "outputs": 3}
    first = client.get("/api/networks/random", params=params)
    second = client.get("/api/networks/random", params=params)
    assert first.status_code == 200
    assert first.text == second.text
    net = parse_problem(first.text).network
    assert net.m == 3
    assert len(net.nodes_of_type("relu")) == 6

    response = client.get("/api/networks/random", params={"seed": 5, "with_property": True})
    assert response.status_code == 200
    assert len(parse_problem(response.text).property) > 2 * 2

    response = client.get("/api/networks/random", params={"hidden": "2", "pool_fan_in": 3})
    assert response.status_code == 422
    response = client.get("/api/networks/random", params={"hidden": "a,b"})
    assert response.status_code == 422


def test_margin_endpoint():
    """安全余量接口"""
    response = client.post("/api/queries/margin", json={
        "problem": CROSSING_NET,
        "query": {"base": [0.8]},
    })
    assert response.status_code == 200
    data = response.json()
    assert data["robust_at_hi"] is True
    assert data["epsilon"] == 0.05
    assert data["base_class"] == 1


def test_margin_endpoint_errors():
    """基准点分类与期望不符返回400，搜索区间非法返回422"""
    response = client.post("/api/queries/margin", json={
        "problem": CROSSING_NET,
        "query": {"base": [0.8], "expected_class": 2},
    })
    assert response.status_code == 400
    assert response.json()["code"] == "E_MISCLASSIFIED_BASE"

    response = client.post("/api/queries/margin", json={
        "problem": CROSSING_NET,
        "query": {"base": [0.8], "lo": 0.1, "hi": 0.05},
    })
    assert response.status_code == 422


@pytest.mark.parametrize("delta,expected", [(0.5, "SAT"), (1.2, "UNSAT")])
def test_strongclass_endpoint(delta, expected):
    """强分类接口"""
    response = client.post("/api/queries/strongclass", json={
        "problem": CROSSING_NET,
        "query": {"target_class": 1, "delta": delta, "box": [[0.0, 1.0]]},
    })
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == expected
    if expected == "SAT":
        assert data["witness_valid"] is True


def test_noise_endpoints():
    """平滑噪声与幅度有界噪声接口"""
    problem = (
        "Input p0\nInput p1\nInput p2\nInput p3\n"
        "Linear y1 0.0 1.0 p0 1.0 p1 1.0 p2 1.0 p3\n"
        "Linear y2 2.0 0.0 p0\n"
    )
    query = {"base": [0.4] * 4, "width": 2, "height": 2, "border": 0, "target_class": 1}

    response = client.post("/api/queries/smoothnoise", json={
        "problem": problem, "query": {**query, "bound": 0.15},
    })
    assert response.status_code == 200
    assert response.json()["status"] == "SAT"

    response = client.post("/api/queries/boundednoise", json={
        "problem": problem, "query": {**query, "amplitude": 0.05},
    })
    assert response.status_code == 200
    assert response.json()["status"] == "UNSAT"

    response = client.post("/api/queries/boundednoise", json={
        "problem": problem, "query": {**query, "width": 3},
    })
    assert response.status_code == 400
    assert response.json()["code"] == "E_GRID_MISMATCH"
