import json

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cartier.errors import (
    AuthFailure,
    CacheMiss,
    EmptyQuery,
    EmptyVocabulary,
    InvalidTemplate,
    NetworkError,
    NoMatch,
)
from cartier.grounding import (
    DEFAULT_TEMPLATE,
    GroundingFailed,
    LlmParams,
    MockBackend,
    OpenAICompatibleBackend,
    PromptTemplate,
    ResponseCache,
    ScriptedBackend,
    build_prompt,
    cache_key,
    complete,
    ground_query,
    parse_object,
    parse_prompt,
)
from cartier.index import build_object_depth

T = PromptTemplate("Objects: {objects}. User: {query}", "t")


def test_build_prompt_example():
    p = build_prompt(T, ["sofa", "mug", "bed"], "I'm tired")
    assert p == "Objects: sofa, mug, bed. User: I'm tired"


def test_build_prompt_keeps_first_occurrence_order():
    assert build_prompt(T, ["mug", "sofa", "mug", "bed", "sofa"], "q") == "Objects: mug, sofa, bed. User: q"


def test_build_prompt_errors():
    with pytest.raises(EmptyVocabulary):
        build_prompt(T, [], "q")
    with pytest.raises(EmptyQuery):
        build_prompt(T, ["mug"], "   ")
    with pytest.raises(EmptyVocabulary):
        build_prompt(T, ["mug, red"], "q")
    with pytest.raises(InvalidTemplate):
        PromptTemplate("no placeholders")
    with pytest.raises(InvalidTemplate):
        PromptTemplate("{objects} {objects} {query}")


def test_query_is_inserted_verbatim():
    q = 'literal {objects} and "quotes"\nnewline'
    p = build_prompt(T, ["a"], q)
    assert p.endswith(q)
    assert parse_prompt(T, p) == (["a"], q)


_label = st.text(st.characters(blacklist_characters=",\n", blacklist_categories=("Cs",)), min_size=1, max_size=8).filter(
    lambda s: s.strip() and not s.startswith(" ") and not s.endswith(" ")
)


@given(
    st.lists(_label, min_size=1, max_size=5, unique=True),
    st.text(min_size=1, max_size=20).filter(str.strip),
    st.lists(_label, min_size=1, max_size=5, unique=True),
    st.text(min_size=1, max_size=20).filter(str.strip),
)
def test_prompt_is_injective(v1, q1, v2, q2):
    p1, p2 = build_prompt(T, v1, q1), build_prompt(T, v2, q2)
    if (v1, q1) != (v2, q2):
        assert p1 != p2
    assert parse_prompt(T, p1) == (v1, q1)


def test_default_template_has_both_placeholders():
    p = build_prompt(DEFAULT_TEMPLATE, ["sofa", "bed"], "I'm tired")
    assert "sofa, bed" in p and "I'm tired" in p


# -- parse_object


@pytest.mark.parametrize(
    "response, expected",
    [
        ("The robot should go to the object called `Bed'.", "bed"),
        ("mug", "mug"),
        ("Not the sofa; go to the bed.", "bed"),
        ("The BED, definitely.", "bed"),
        ("Try the coffee_table", "coffee table"),
        ("try the coffee-table!", "coffee table"),
        ("Go to the table. Actually the coffee table.", "coffee table"),
    ],
)
def test_parse_object_examples(response, expected):
    vocab = ["sofa", "mug", "bed", "table", "coffee table"]
    assert parse_object(response, vocab) == expected


def test_parse_object_word_boundaries():
    with pytest.raises(NoMatch) as ei:
        parse_object("I'd pick the bedroom door", ["bed", "mug"])
    assert ei.value.response == "I'd pick the bedroom door"
    # tie on end offset goes to the longer label
    assert parse_object("the coffee table", ["table", "coffee table"]) == "coffee table"


@given(st.sampled_from(["sofa", "tv stand", "coffee_table"]), st.booleans())
def test_parse_object_case_and_separator_invariant(label, upper):
    vocab = ["sofa", "tv stand", "coffee_table"]
    spoken = label.replace("_", " ")
    text = f"go to the {spoken.upper() if upper else spoken.title()}"
    assert parse_object(text, vocab) == label


def test_parse_object_empty_vocabulary():
    with pytest.raises(EmptyVocabulary):
        parse_object("bed", [])


# -- completion modes


def test_live_record_replay(tmp_path):
    prompt = build_prompt(T, ["sofa", "bed"], "tired")
    backend = MockBackend.first_object(T, model="m")
    params = LlmParams(model="m")
    assert complete(backend, prompt, params, mode="live") == "sofa"
    cache = ResponseCache(tmp_path / "c.jsonl")
    assert complete(backend, prompt, params, cache, "record", "t") == "sofa"
    line = json.loads((tmp_path / "c.jsonl").read_text().splitlines()[0])
    assert line["key"] == cache_key("m", "t", prompt, params)
    assert line["request"]["prompt"] == prompt and line["response"] == "sofa"

    replay = ResponseCache(tmp_path / "c.jsonl")
    calls = backend.calls
    assert complete(None, prompt, params, replay, "replay", "t") == "sofa"
    assert backend.calls == calls
    with pytest.raises(CacheMiss):
        complete(None, prompt + " ", params, replay, "replay", "t")
    with pytest.raises(CacheMiss):
        complete(None, prompt, LlmParams(model="m", max_tokens=10), replay, "replay", "t")
    with pytest.raises(CacheMiss):
        complete(None, prompt, params, replay, "replay", "other-template")


def test_cache_key_depends_on_each_field():
    p = LlmParams()
    base = cache_key("m", "t", "x", p)
    variants = [
        cache_key("n", "t", "x", p),
        cache_key("m", "u", "x", p),
        cache_key("m", "t", "y", p),
        cache_key("m", "t", "x", LlmParams(temperature=0.5)),
        cache_key("m", "t", "x", LlmParams(max_tokens=1)),
        cache_key("m", "t", "x", LlmParams(stop=("\n",))),
    ]
    assert len(set(variants + [base])) == 7


def test_replay_is_byte_identical(tmp_path):
    prompt = build_prompt(T, ["a", "b"], "q")
    text = "Go to the b. é中 \n trailing  "
    params = LlmParams(model="m")
    cache = ResponseCache(tmp_path / "c.jsonl")
    complete(ScriptedBackend({prompt: text}, "m"), prompt, params, cache, "record", "t")
    assert complete(None, prompt, params, ResponseCache(tmp_path / "c.jsonl"), "replay", "t") == text


# -- HTTP backend


def _ok(content="Go to the bed."):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def _backend(handler, **kw):
    sleeps = []
    b = OpenAICompatibleBackend(
        "sk-test", "https://llm.example/v1", "gpt-4",
        transport=httpx.MockTransport(handler), sleep=sleeps.append, **kw,
    )
    return b, sleeps


def test_http_request_body():
    seen = []

    def handler(req):
        seen.append(req)
        return _ok()

    b, _ = _backend(handler)
    assert b.complete("hello", LlmParams()) == "Go to the bed."
    req = seen[0]
    assert req.url == "https://llm.example/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert body["temperature"] == 0.0 and "stop" not in body
    assert body["messages"] == [{"role": "user", "content": "hello"}]


def test_http_retries_server_errors_then_succeeds():
    codes = iter([500, 503, 200])

    def handler(req):
        c = next(codes)
        return _ok() if c == 200 else httpx.Response(c)

    b, sleeps = _backend(handler, backoff_base=1.0)
    assert b.complete("x", LlmParams()) == "Go to the bed."
    assert sleeps == [1.0, 2.0]


def test_http_honours_retry_after():
    codes = iter([429, 200])

    def handler(req):
        return _ok() if next(codes) == 200 else httpx.Response(429, headers={"Retry-After": "7"})

    b, sleeps = _backend(handler)
    b.complete("x", LlmParams())
    assert sleeps == [7.0]


def test_http_gives_up_after_max_retries():
    def handler(req):
        return httpx.Response(502)

    b, sleeps = _backend(handler, max_retries=2, backoff_base=1.0, backoff_cap=1.5)
    with pytest.raises(NetworkError):
        b.complete("x", LlmParams())
    assert sleeps == [1.0, 1.5]


def test_http_auth_failure_is_not_retried():
    def handler(req):
        return httpx.Response(401)

    b, sleeps = _backend(handler)
    with pytest.raises(AuthFailure):
        b.complete("x", LlmParams())
    assert sleeps == []


def test_missing_api_key(monkeypatch):
    monkeypatch.delenv("CARTIER_LLM_API_KEY", raising=False)
    with pytest.raises(AuthFailure):
        OpenAICompatibleBackend.from_env()


# -- end to end


def test_ground_query_end_to_end(traj3):
    idx = build_object_depth(traj3)
    backend = MockBackend.oracle(DEFAULT_TEMPLATE, {"I'm tired": "sofa"})
    g = ground_query(traj3, "I'm tired", backend, idx)
    assert g.label == "sofa"
    np.testing.assert_array_equal(g.point, idx.lookup("sofa"))
    assert "sofa, mug" in g.prompt


def test_ground_query_failure_carries_response(traj3):
    idx = build_object_depth(traj3)
    backend = MockBackend(DEFAULT_TEMPLATE, lambda objs, q: "Sorry, I cannot help.")
    with pytest.raises(GroundingFailed) as ei:
        ground_query(traj3, "hello", backend, idx)
    assert ei.value.response == "Sorry, I cannot help."
    assert "hello" in ei.value.prompt
