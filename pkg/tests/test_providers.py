import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from contrasim.providers import (
    PROMPT_TEMPLATES,
    HttpDiscriminator,
    HttpGenerator,
    MockDiscriminator,
    MockGenerator,
    ProviderError,
)


def test_mock_generator_deterministic_and_tagged():
    gen = MockGenerator(seed=0)
    a = gen.generate("Re", "some headline")
    b = gen.generate("Re", "some headline")
    assert a == b
    assert a.startswith("Rephrased")
    assert gen.generate("N", "x", attempt=1) != gen.generate("N", "x", attempt=0)


def test_mock_generator_rejects_unknown_action():
    with pytest.raises(ValueError):
        MockGenerator().generate("Ra", "text")


def test_mock_discriminator_scores_tagged_candidates_in_band():
    disc = MockDiscriminator(seed=0)
    gen = MockGenerator(seed=0)
    bands = {"Re": (0.66, 1.0), "S": (0.33, 0.66), "N": (0.0, 0.33)}
    for action, (lo, hi) in bands.items():
        for base in ("alpha", "beta", "gamma"):
            s = disc.score(base, gen.generate(action, base))
            assert lo <= s <= hi, (action, s)


def test_mock_discriminator_plain_pairs_in_unit_interval():
    disc = MockDiscriminator(seed=3)
    for i in range(50):
        s = disc.score(f"a{i}", f"b{i}")
        assert 0.0 <= s <= 1.0
    assert disc.score("a", "b") == disc.score("a", "b")


def test_prompt_templates_cover_generated_actions():
    assert set(PROMPT_TEMPLATES) == {"Re", "S", "N"}
    assert all("headline" in t for t in PROMPT_TEMPLATES.values())


# ---------------------------------------------------------------------------
# HTTP wire formats against a local server
# ---------------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    requests: list = []
    fail_first = 0
    disc_score = 0.42

    def do_POST(self):
        cls = type(self)
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        cls.requests.append((self.path, body, self.headers.get("Authorization")))
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        if self.path == "/chat":
            payload = {"choices": [{"message": {"content": "  generated headline  "}}]}
        else:
            payload = {"score": cls.disc_score}
        raw = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    _Handler.requests = []
    _Handler.fail_first = 0
    yield f"http://127.0.0.1:{httpd.server_port}"
    httpd.shutdown()


def test_http_generator_request_shape_and_trimmed_response(server):
    gen = HttpGenerator(endpoint=f"{server}/chat", model="small-chat", api_key="sekrit",
                        temperature=0.4)
    text = gen.generate("Re", "base headline")
    assert text == "generated headline"
    path, body, auth = _Handler.requests[-1]
    assert path == "/chat"
    assert body["model"] == "small-chat"
    assert body["temperature"] == 0.4
    assert body["messages"][0] == {"role": "system", "content": PROMPT_TEMPLATES["Re"]}
    assert body["messages"][1] == {"role": "user", "content": "base headline"}
    assert auth == "Bearer sekrit"


def test_http_generator_prompt_override(server):
    gen = HttpGenerator(endpoint=f"{server}/chat", model="m",
                        prompts={"Re": "custom rewording instructions"})
    gen.generate("Re", "headline")
    assert _Handler.requests[-1][1]["messages"][0]["content"] == "custom rewording instructions"
    gen.generate("N", "headline")  # untouched actions keep the built-in prompt
    assert _Handler.requests[-1][1]["messages"][0]["content"] == PROMPT_TEMPLATES["N"]


def test_http_generator_rejects_unknown_prompt_override():
    with pytest.raises(ValueError, match="unknown actions"):
        HttpGenerator(endpoint="http://x", model="m", prompts={"Ra": "nope"})


def test_http_generator_retries_transport_failures(server):
    _Handler.fail_first = 2
    gen = HttpGenerator(endpoint=f"{server}/chat", model="m", max_retries=3, backoff=0.01)
    assert gen.generate("S", "x") == "generated headline"


def test_http_generator_gives_up_after_budget(server):
    _Handler.fail_first = 5
    gen = HttpGenerator(endpoint=f"{server}/chat", model="m", max_retries=2, backoff=0.01)
    with pytest.raises(ProviderError, match="after 2 attempts"):
        gen.generate("S", "x")
    _Handler.fail_first = 0


def test_http_discriminator_request_shape_and_score(server):
    disc = HttpDiscriminator(endpoint=f"{server}/score")
    assert disc.score("first text", "second text") == 0.42
    path, body, _ = _Handler.requests[-1]
    assert path == "/score"
    assert body == {"text_a": "first text", "text_b": "second text"}


def test_http_discriminator_rejects_out_of_range_score(server):
    _Handler.disc_score = 1.7
    disc = HttpDiscriminator(endpoint=f"{server}/score", max_retries=1)
    with pytest.raises(ProviderError, match="outside"):
        disc.score("a", "b")
    _Handler.disc_score = 0.42
