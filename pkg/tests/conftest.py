import sys
import textwrap

import pytest

ADAPTER_TEMPLATE = """\
import json, sys

T_OBS = {t_obs}
T_PRED = {t_pred}
K = {k}

print(json.dumps({{"type": "hello", "t_obs": T_OBS, "t_pred": T_PRED, "k": K}}), flush=True)
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    try:
        req = json.loads(line)
    except ValueError:
        print(json.dumps({{"type": "error", "id": None, "msg": "bad json"}}), flush=True)
        continue
    if req.get("type") == "bye":
        break
    if req.get("type") != "predict":
        print(json.dumps({{"type": "error", "id": req.get("id"), "msg": "bad request"}}),
              flush=True)
        continue
    prim = req["primary"]
    (x1, y1), (x0, y0) = prim[-2], prim[-1]
    vx, vy = x0 - x1, y0 - y1
    mode = [[x0 + vx * (t + 1), y0 + vy * (t + 1)] for t in range(T_PRED)]
    print(json.dumps({{"type": "prediction", "id": req["id"], "modes": [mode] * K}}),
          flush=True)
"""


@pytest.fixture
def adapter_command(tmp_path):
    """Command for a minimal stdio predictor used as a protocol test double."""

    def make(t_obs=9, t_pred=12, k=1, body=None):
        source = body if body is not None else ADAPTER_TEMPLATE.format(
            t_obs=t_obs, t_pred=t_pred, k=k)
        path = tmp_path / "adapter.py"
        path.write_text(textwrap.dedent(source))
        return (sys.executable, str(path))

    return make
