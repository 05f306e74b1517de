"""Remote model boundary against a local (loopback-only) stub server."""
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from tsarag.errors import BadStatus, MalformedResponse, ShapeMismatch, Timeout
from tsarag.predictor import RemoteModel, remote_predict


class StubHandler(BaseHTTPRequestHandler):
    """Behavior switches on the path prefix."""

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        mode = self.path.strip("/").split("/")[0]
        if mode == "echo":
            window = np.asarray(body["window"])
            horizon = body["horizon"]
            pred = np.repeat(window[:, -1:], horizon, axis=1)
            self._reply(200, {"prediction": pred.tolist()})
        elif mode == "wrongshape":
            self._reply(200, {"prediction": [[1.0]]})
        elif mode == "badstatus":
            self._reply(500, {"error": "boom"})
        elif mode == "garbage":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"not json at all")
        elif mode == "nofield":
            self._reply(200, {"output": [[1.0]]})
        elif mode == "slow":
            time.sleep(2.0)
            self._reply(200, {"prediction": [[0.0]]})
        else:
            self._reply(404, {})

    def _reply(self, status, doc):
        payload = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture(scope="module")
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_echo_repeats_last_column(stub_server):
    window = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    pred = remote_predict(f"{stub_server}/echo", "forecast", window, None, 4, 5.0)
    np.testing.assert_array_equal(pred, [[3.0] * 4, [6.0] * 4])


def test_mask_travels_in_body(stub_server):
    window = np.ones((2, 3))
    mask = np.array([[1, 0, 1], [0, 1, 1]])
    pred = remote_predict(f"{stub_server}/echo", "impute", window, mask, 2, 5.0)
    assert pred.shape == (2, 2)


def test_wrong_shape_rejected(stub_server):
    with pytest.raises(ShapeMismatch):
        remote_predict(f"{stub_server}/wrongshape", "forecast",
                       np.ones((2, 3)), None, 4, 5.0)


def test_bad_status_surfaces(stub_server):
    with pytest.raises(BadStatus):
        remote_predict(f"{stub_server}/badstatus", "forecast",
                       np.ones((1, 2)), None, 1, 5.0)


def test_unparseable_json(stub_server):
    with pytest.raises(MalformedResponse):
        remote_predict(f"{stub_server}/garbage", "forecast",
                       np.ones((1, 2)), None, 1, 5.0)


def test_missing_prediction_field(stub_server):
    with pytest.raises(MalformedResponse):
        remote_predict(f"{stub_server}/nofield", "forecast",
                       np.ones((1, 2)), None, 1, 5.0)


def test_timeout_respects_configured_duration(stub_server):
    start = time.perf_counter()
    with pytest.raises(Timeout):
        remote_predict(f"{stub_server}/slow", "forecast",
                       np.ones((1, 2)), None, 1, 0.5)
    elapsed = time.perf_counter() - start
    assert 0.4 <= elapsed <= 1.0  # configured 0.5s +-20% plus overhead


def test_unreachable_endpoint_times_out():
    with pytest.raises(Timeout):
        remote_predict("http://127.0.0.1:1", "forecast",
                       np.ones((1, 2)), None, 1, 0.5)


def test_remote_model_adapter(stub_server):
    model = RemoteModel(endpoint=f"{stub_server}/echo", task="forecast",
                        tau=3, nu=2)
    window = np.array([[1.0, 2.0, 7.0]])
    np.testing.assert_array_equal(model.predict(window), [[7.0, 7.0]])
