"""Wire-protocol conformance suite; runs against any sidecar claiming the protocol."""

import pickle
import struct
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from flowstudio.kernel import ExecRequest, KernelPool, KernelProcess, default_sidecar_argv
from flowstudio.store import ValueStore


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    return ValueStore(tmp_path_factory.mktemp("store"))


@pytest.fixture(scope="module")
def pool(store):
    with KernelPool(store.root, size=2, default_timeout_s=30) as pool:
        yield pool


def test_identity_function_over_stored_scalar(store, pool):
    ref = store.put_bytes(pickle.dumps(42))
    result = pool.submit(ExecRequest(source="def f(x):\n    return x\n", entrypoint="f", bindings={"x": ref.sha256}))
    assert result.status == "ok"
    assert result.result_ref.summary == {"kind": "scalar", "base": "int", "value": 42}


def test_runtime_error_reports_traceback(pool):
    result = pool.submit(ExecRequest(source="def f():\n    return 1 / 0\n", entrypoint="f"))
    assert result.status == "exception"
    assert result.error["type"] == "ZeroDivisionError"
    assert "Traceback" in result.error["traceback"]


def test_syntax_error_distinct_from_runtime(pool):
    result = pool.submit(ExecRequest(source="def f(:\n    pass\n", entrypoint="f"))
    assert result.status == "syntax_error"
    assert result.error["type"] == "SyntaxError"


def test_statelessness_probe(pool):
    # Request 1 defines a "global"; request 2 must not observe it.
    r1 = pool.submit(ExecRequest(source="leaked_global = 123\n'set'", mode="snippet"))
    assert r1.status == "ok"
    for _ in range(pool.size):
        r2 = pool.submit(ExecRequest(source="'leaked_global' in dir()", mode="snippet"))
        assert r2.status == "ok"
        assert r2.result_ref.summary["value"] is False


def test_figure_capture_produces_valid_png(store, pool):
    source = (
        "def f():\n"
        "    import matplotlib.pyplot as plt\n"
        "    fig, ax = plt.subplots()\n"
        "    ax.plot([0, 1], [1, 0])\n"
        "    return None\n"
    )
    result = pool.submit(ExecRequest(source=source, entrypoint="f", capture_figures=True))
    assert result.status == "ok"
    assert len(result.figures) == 1
    png = store.get_bytes(result.figures[0])
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    from PIL import Image
    import io

    image = Image.open(io.BytesIO(png))
    assert image.size[0] > 0


def test_stdout_captured_and_capped(pool):
    result = pool.submit(ExecRequest(source="print('x' * 10)\nprint('done')", mode="snippet"))
    assert "done" in result.stdout
    big = pool.submit(ExecRequest(source="print('y' * 500000)", mode="snippet"))
    assert big.stdout_truncated
    assert len(big.stdout) <= 256 * 1024 + 1


def test_snippet_returns_final_expression(store, pool):
    ref = store.put_bytes(pickle.dumps([1.0, 2.0, 3.0]))
    result = pool.submit(ExecRequest(source="sum(xs) / len(xs)", mode="snippet", bindings={"xs": ref.sha256}))
    assert result.status == "ok"
    assert result.result_ref.summary == {"kind": "scalar", "base": "float", "value": 2.0}


def test_unpicklable_value_degrades_to_opaque(pool):
    result = pool.submit(ExecRequest(source="lambda: 1", mode="snippet"))
    assert result.status == "ok"
    assert result.result_ref.summary["kind"] == "opaque"


def test_timeout_kills_and_replaces_kernel(store):
    with KernelPool(store.root, size=1, default_timeout_s=30) as pool:
        before = pool.replacements
        result = pool.submit(ExecRequest(source="import time\ntime.sleep(60)", mode="snippet", timeout_s=1.0))
        assert result.status == "timeout"
        assert pool.replacements == before + 1
        after = pool.submit(ExecRequest(source="40 + 2", mode="snippet"))
        assert after.status == "ok"
        assert after.result_ref.summary["value"] == 42


def test_pool_survives_consecutive_crashes(store):
    with KernelPool(store.root, size=1, default_timeout_s=30) as pool:
        for _ in range(3):
            result = pool.submit(ExecRequest(source="import os\nos._exit(9)", mode="snippet"))
            assert result.status == "crashed"
        ok = pool.submit(ExecRequest(source="1 + 1", mode="snippet"))
        assert ok.status == "ok"


def test_malformed_frames_get_protocol_error():
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        kernel = KernelProcess(default_sidecar_argv(tmp, None))
        try:
            payload = b"this is not json"
            kernel.proc.stdin.write(struct.pack(">I", len(payload)) + payload)
            kernel.proc.stdin.flush()
            frame = kernel.recv(timeout=15)
            assert frame["type"] == "protocol_error"
            payload = b'{"no_type": true}'
            kernel.proc.stdin.write(struct.pack(">I", len(payload)) + payload)
            kernel.proc.stdin.flush()
            frame = kernel.recv(timeout=15)
            assert frame["type"] == "protocol_error"
            # Still alive and serving after the garbage.
            kernel.send({"v": 1, "type": "ping", "id": "p1"})
            assert kernel.recv(timeout=15)["type"] == "pong"
        finally:
            kernel.kill()


def test_unknown_frame_type_answered():
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        kernel = KernelProcess(default_sidecar_argv(tmp, None))
        try:
            kernel.send({"v": 1, "type": "mystery", "id": "m1"})
            frame = kernel.recv(timeout=15)
            assert frame["type"] == "protocol_error"
            assert frame["id"] == "m1"
        finally:
            kernel.kill()


def test_pool_rejects_zero_size(store):
    with pytest.raises(ValueError):
        KernelPool(store.root, size=0)
    with KernelPool(store.root, size=1) as pool:
        with pytest.raises(ValueError):
            pool.resize(0)


def test_resize_grow_enables_overlap(store):
    with KernelPool(store.root, size=1, default_timeout_s=30) as pool:
        pool.resize(3)
        assert pool.size == 3

        def busy(_):
            t0 = time.monotonic()
            r = pool.submit(ExecRequest(source="import time\ntime.sleep(0.4)\n'ok'", mode="snippet"))
            return t0, time.monotonic(), r.status

        with ThreadPoolExecutor(max_workers=3) as tpe:
            spans = list(tpe.map(busy, range(3)))
        assert all(s[2] == "ok" for s in spans)
        starts = [s[0] for s in spans]
        ends = [s[1] for s in spans]
        # Three 0.4s sleeps must overlap on a 3-kernel pool.
        assert max(ends) - min(starts) < 1.0


def test_resize_shrink_drains_gracefully(store):
    with KernelPool(store.root, size=3, default_timeout_s=30) as pool:
        pool.resize(1)
        assert pool.size == 1
        result = pool.submit(ExecRequest(source="2 + 2", mode="snippet"))
        assert result.status == "ok"


def test_workdir_gives_dataset_access(tmp_path):
    (tmp_path / "data.csv").write_text("a,b\n1,2\n3,4\n")
    store = ValueStore(tmp_path / "store")
    with KernelPool(store.root, size=1, workdir=tmp_path, default_timeout_s=30) as pool:
        result = pool.submit(
            ExecRequest(
                source="def load():\n    import pandas as pd\n    return pd.read_csv('data.csv')\n",
                entrypoint="load",
            )
        )
        assert result.status == "ok"
        assert result.result_ref.summary["kind"] == "dataframe"
        assert result.result_ref.summary["row_count"] == 2


def test_evaluation_deterministic_with_seeded_code(store):
    source = (
        "def sample():\n"
        "    import numpy as np\n"
        "    rng = np.random.default_rng(7)\n"
        "    return [float(x) for x in rng.normal(size=5)]\n"
    )
    with KernelPool(store.root, size=1, default_timeout_s=30) as pool:
        r1 = pool.submit(ExecRequest(source=source, entrypoint="sample"))
        r2 = pool.submit(ExecRequest(source=source, entrypoint="sample"))
    assert r1.result_ref.sha256 == r2.result_ref.sha256
