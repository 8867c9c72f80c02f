"""
LLM-backed policy and judge over an OpenAI-compatible chat-completions endpoint.
"""

from moral_sim.llm.client import ChatClient, ChatExchange, TranscriptReplayClient
from moral_sim.llm.gateway import LLMPolicy, decide_with_validation, replay_policy
from moral_sim.llm.judge import LLMJudge
from moral_sim.llm.prompts import PromptAssets, build_messages, render_system_prompt

__all__ = [
    "ChatClient",
    "ChatExchange",
    "LLMJudge",
    "LLMPolicy",
    "PromptAssets",
    "TranscriptReplayClient",
    "build_messages",
    "decide_with_validation",
    "replay_policy",
    "render_system_prompt",
]
