"""Regenerates feed.jsonl and transcripts/*.txt.

Run from this directory: python3 make_corpus.py
"""

import json
import random
import textwrap

THEMES = {
    "climate": "climate emissions carbon renewable wind solar forests biodiversity warming energy transition peat".split(),
    "economy": "economy budget taxes growth inflation employment wages investment deficit markets exports".split(),
    "health": "health hospitals nurses doctors care patients waiting clinics elderly medicine pandemic".split(),
    "education": "education schools teachers students universities learning classrooms research pupils funding".split(),
    "defence": "defence security border army alliance nato readiness conscription borders deterrence".split(),
    "transport": "transport railways roads trains buses commuting tickets infrastructure tracks stations".split(),
    "housing": "housing rents apartments construction mortgages tenants homelessness zoning neighbourhoods".split(),
    "agriculture": "farmers agriculture crops harvest dairy subsidies rural fields livestock grain".split(),
}
FILLER = "we must the government will our people this year need more for and with new plan".split()

PERSONS = [
    ("Anna Virtanen", ["climate", "transport", "housing"]),
    ("Mikko Laine", ["economy", "defence", "agriculture"]),
    ("Sari Koski", ["health", "education", "housing"]),
    ("Jussi Nieminen", ["agriculture", "transport", "economy"]),
    ("Liisa Heikkinen", ["climate", "education", "health"]),
]


def sentence(rng, themes, n):
    words = []
    for _ in range(n):
        if rng.random() < 0.2:
            words.append(rng.choice(FILLER))
        else:
            words.append(rng.choice(THEMES[rng.choice(themes)]))
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def text(rng, themes, sentences):
    return " ".join(sentence(rng, themes, rng.randint(8, 16)) for _ in range(sentences))


def main():
    rng = random.Random(20230101)
    with open("feed.jsonl", "w", encoding="utf-8") as f:
        for i in range(60):
            name, interests = PERSONS[i % len(PERSONS)]
            themes = rng.sample(interests, 2)
            month = 1 + (i * 7) % 12
            day = 1 + (i * 11) % 27
            rec = {
                "external_id": f"post-{i:03d}",
                "body": text(rng, themes, rng.randint(3, 6)),
                "author": name,
                "published_at": f"2023-{month:02d}-{day:02d}T{8 + i % 10:02d}:15:00Z",
                "url": f"https://social.example/{name.split()[0].lower()}/status/{1000 + i}",
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
        f.write(json.dumps({
            "external_id": "post-unknown",
            "body": "Climate budget schools and railways all need attention this year.",
            "author": "Pekka Unknown",
            "published_at": "2023-06-01T12:00:00Z",
            "url": "https://social.example/pekka/status/1",
        }) + "\n")
        f.write(json.dumps({
            "external_id": "post-empty",
            "body": "!!! ... ???",
            "author": "Anna Virtanen",
            "published_at": "2023-06-02T12:00:00Z",
            "url": "https://social.example/anna/status/2",
        }) + "\n")

    speech = 0
    for session, month in (("2023-03", 3), ("2023-09", 9)):
        blocks = []
        for j in range(25):
            name, interests = PERSONS[(speech * 3) % len(PERSONS)]
            themes = rng.sample(interests, 2)
            lines = [f"SPEAKER: {name}", f"DATE: 2023-{month:02d}-{1 + j:02d}"]
            if j % 4 == 0:
                lines.append(f"URL: https://parliament.example/plenary/{session}/{j + 1}")
            body = text(rng, themes, rng.randint(5, 12))
            lines.extend(textwrap.wrap(body, 72))
            blocks.append("\n".join(lines))
            speech += 1
        with open(f"transcripts/session-{session}.txt", "w", encoding="utf-8") as f:
            f.write("\n\n".join(blocks) + "\n")


if __name__ == "__main__":
    main()
