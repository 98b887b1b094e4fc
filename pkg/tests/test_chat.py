"""Chat-completions client: config, retries, and failure taxonomy.

A throwaway threaded HTTP server plays the endpoint so no network leaves
the process.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from gridnav.chat import ChatConfig, chat_complete
from gridnav.errors import ChatParseError, ChatServiceError, ChatTransportError


class ScriptedHandler(BaseHTTPRequestHandler):
    """Serves canned responses from the server's `script` list in order."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        self.server.requests.append((self.path, body, dict(self.headers)))
        if not self.server.script:
            status, payload = 200, {"choices": [{"message": {"content": "ok"}}]}
        else:
            status, payload = self.server.script.pop(0)
        if status == "hang":
            import time

            time.sleep(1.0)
            status, payload = 200, payload
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), ScriptedHandler)
    server.script = []
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    thread.join(timeout=5)


def config_for(server, **kw):
    defaults = dict(
        base_url=f"http://127.0.0.1:{server.server_address[1]}/v1",
        model="test-model",
        api_key="sk-test",
        timeout_s=2.0,
        max_attempts=3,
        backoff_base_s=0.01,
    )
    defaults.update(kw)
    return ChatConfig(**defaults)


MESSAGES = [{"role": "user", "content": "hello"}]


def test_successful_completion(stub_server):
    stub_server.script = [(200, {"choices": [{"message": {"content": "ACTION: stop"}}]})]
    reply = chat_complete(config_for(stub_server), MESSAGES)
    assert reply == "ACTION: stop"
    path, body, headers = stub_server.requests[0]
    assert path.endswith("/chat/completions")
    assert body["model"] == "test-model"
    assert body["messages"] == MESSAGES
    assert headers.get("Authorization") == "Bearer sk-test"


def test_retry_on_server_error_then_success(stub_server):
    stub_server.script = [
        (500, {"error": "boom"}),
        (429, {"error": "slow down"}),
        (200, {"choices": [{"message": {"content": "fine"}}]}),
    ]
    reply = chat_complete(config_for(stub_server), MESSAGES)
    assert reply == "fine"
    assert len(stub_server.requests) == 3


def test_exhausted_retries_raise_service_error(stub_server):
    stub_server.script = [(503, {}), (503, {}), (503, {})]
    with pytest.raises(ChatServiceError) as err:
        chat_complete(config_for(stub_server), MESSAGES)
    assert err.value.status_code == 503
    assert len(stub_server.requests) == 3


def test_non_retryable_status_fails_immediately(stub_server):
    stub_server.script = [(400, {"error": "bad request"})]
    with pytest.raises(ChatServiceError) as err:
        chat_complete(config_for(stub_server), MESSAGES)
    assert err.value.status_code == 400
    assert len(stub_server.requests) == 1


def test_timeout_becomes_transport_error(stub_server):
    stub_server.script = [
        ("hang", {"choices": [{"message": {"content": "late"}}]}),
    ] * 3
    config = config_for(stub_server, timeout_s=0.2, max_attempts=2)
    with pytest.raises(ChatTransportError):
        chat_complete(config, MESSAGES)


def test_connection_refused_is_transport_error():
    config = ChatConfig(
        base_url="http://127.0.0.1:1/v1",
        model="m",
        max_attempts=2,
        backoff_base_s=0.01,
        timeout_s=0.5,
    )
    with pytest.raises(ChatTransportError):
        chat_complete(config, MESSAGES)


def test_malformed_payload_is_parse_error(stub_server):
    stub_server.script = [(200, {"choices": []})]
    with pytest.raises(ChatParseError):
        chat_complete(config_for(stub_server), MESSAGES)
    stub_server.script = [(200, {"unexpected": True})]
    with pytest.raises(ChatParseError):
        chat_complete(config_for(stub_server), MESSAGES)


def test_config_from_env(monkeypatch):
    monkeypatch.setenv("GRIDNAV_CHAT_BASE_URL", "http://example.invalid/v1")
    monkeypatch.setenv("GRIDNAV_CHAT_MODEL", "let-me-cook")
    monkeypatch.setenv("GRIDNAV_CHAT_API_KEY", "sk-abc")
    monkeypatch.setenv("GRIDNAV_CHAT_TIMEOUT_S", "7.5")
    config = ChatConfig.from_env()
    assert config.base_url == "http://example.invalid/v1"
    assert config.model == "let-me-cook"
    assert config.api_key == "sk-abc"
    assert config.timeout_s == 7.5


def test_config_from_env_requires_base_and_model(monkeypatch):
    monkeypatch.delenv("GRIDNAV_CHAT_BASE_URL", raising=False)
    monkeypatch.delenv("GRIDNAV_CHAT_MODEL", raising=False)
    with pytest.raises(ChatTransportError):
        ChatConfig.from_env()


def test_no_auth_header_without_key(stub_server):
    stub_server.script = [(200, {"choices": [{"message": {"content": "x"}}]})]
    chat_complete(config_for(stub_server, api_key=""), MESSAGES)
    _, _, headers = stub_server.requests[0]
    assert "Authorization" not in headers
