import subprocess

import anthropic

client = anthropic.Anthropic()


def run_task(request):
    prompt = "Suggest a single shell command to " + request + ". Command only."
    msg = client.messages.create(
        model="claude-3-5-sonnet-latest",
        max_tokens=200,
        messages=[{"role": "user", "content": prompt}],
    )
    cmd = msg.content[0].text
    subprocess.run(cmd, shell=True)
