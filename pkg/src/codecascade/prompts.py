"""Prompt templates.

All operator-visible wording lives here so it can be swapped without
touching pipeline code. Section order in the initial prompt: API info,
optional solved-example demonstration, the user query, optional
step-by-step suffix.
"""

from __future__ import annotations

COT_SUFFIX = "Let's think step by step."

API_SECTION_TEMPLATE = (
    "You can use the {api_name} API to obtain the information you need.\n"
    "The API key for {api_name} is {fake_key}."
)

DEMO_SECTION_HEADER = "Here is a similar question that was solved before, with the code that solved it."

DEMO_SECTION_TEMPLATE = (
    DEMO_SECTION_HEADER + "\n"
    "Question: {demo_query}\n"
    "Code:\n"
    "```python\n"
    "{demo_code}"
    "```"
)

ASSISTANT_SYSTEM_PROMPT = (
    "You are a helpful assistant that answers questions by writing Python code.\n"
    "When information must be fetched or computed, suggest the Python code to do it "
    "inside a ```python coding block; it will be executed for you and the output sent back.\n"
    "If an execution fails, read the error trace and reply with refined code.\n"
    "When the task is complete, state the answer and append TERMINATE at the end of your reply."
)

JUDGE_SYSTEM_PROMPT = (
    "You will be shown the full conversation between an assistant and a code executor, "
    "triggered by a user query.\n"
    "Decide whether the user's query was successfully handled.\n"
    "Answer with a single token: yes or no."
)

JUDGE_REPROMPT = (
    "Your previous reply could not be parsed. "
    "Answer with exactly one token, either yes or no, and nothing else."
)
