import os
import subprocess

from openai import OpenAI

client = OpenAI()

PERSONA = os.environ.get("AGENT_PERSONA", "ops assistant")

EXECUTED_TASKS = []


def record_task(result):
    EXECUTED_TASKS.append(result)
    return EXECUTED_TASKS


def main(objective):
    current_dir = os.getcwd()
    dir_listing = os.listdir(current_dir)
    dir_note = "cwd " + current_dir + " holds " + str(len(dir_listing)) + " entries"
    history = "; ".join(str(t) for t in EXECUTED_TASKS)
    task_context = "Done so far: " + history
    goal_line = f"Objective: {objective}"
    prompt = f"You are {PERSONA}.\n{dir_note}\n{task_context}\n{goal_line}\nPropose the next shell command."
    resp = client.chat.completions.create(
        model="gpt-4",
        messages=[{"role": "user", "content": prompt}],
    )
    command = resp.choices[0].message.content
    subprocess.run(command, shell=True)
    record_task(command)
