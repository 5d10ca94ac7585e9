"""Prompt templates sent to the chat backends."""

from __future__ import annotations

DEBIAS_TEMPLATE = (
    "Raw sentence: '<Query>'\n"
    "\n"
    "Task 1: Please detect and rectify spelling and grammatical mistakes in the raw sentence.\n"
    "Task 2: Please rewrite the rectified sentence using different wording while ensuring that the "
    "rewritten sentence retains the original meaning. Please provide <Count> different rewrites. "
    "Please avoid rare words and phrases.\n"
    "\n"
    "Please only return the rewritten sentences."
)

IMAGE_CAPTION_PROMPT = "[image caption] Please provide a detailed description of the image content."

VIDEO_CAPTION_PROMPT = "[Video caption] What is this video about?"

_NUMBER_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten")


def count_word(n: int) -> str:
    return _NUMBER_WORDS[n] if 0 <= n < len(_NUMBER_WORDS) else str(n)


def parse_count_word(word: str) -> int | None:
    word = word.strip().lower()
    if word.isdigit():
        return int(word)
    try:
        return _NUMBER_WORDS.index(word)
    except ValueError:
        return None
