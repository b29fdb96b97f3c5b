"""Builds annotated fixture corpora from inline markup.

Markup tokens are space separated. Annotation markers are tokens of their own:

  <m:CID:LABEL> ... </m>   entity mention; CID groups coreferent mentions ("-" for none),
                           LABEL is PERSON, ORG or LOC, or "-" for a coreference-only mention
  <v:F> ... </v>           predicate of frame F
  <a:ROLE:F> ... </a>      argument ROLE of frame F

Running the script rewrites the fixture files next to it:

  golden/stories.txt, golden/annotations.jsonl   ten hand-written stories
  annotated/stories.txt, annotated/annotations.jsonl   templated stories for round trips
"""

import json
import random
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent


def parse(markup):
    tokens = []
    stack = []
    mentions = []
    clusters = {}
    frames = {}
    for tok in markup.split():
        if tok.startswith("<m:") and tok.endswith(">"):
            _, cid, label = tok[1:-1].split(":")
            stack.append(("m", len(tokens), cid, label))
        elif tok.startswith("<v:") and tok.endswith(">"):
            stack.append(("v", len(tokens), tok[3:-1]))
        elif tok.startswith("<a:") and tok.endswith(">"):
            _, role, frame = tok[1:-1].split(":")
            stack.append(("a", len(tokens), role, frame))
        elif tok in ("</m>", "</v>", "</a>"):
            entry = stack.pop()
            assert entry[0] == tok[2], f"mismatched {tok} in: {markup}"
            span = [entry[1], len(tokens)]
            if entry[0] == "m":
                cid, label = entry[2], entry[3]
                if label != "-":
                    mentions.append({"span": span, "label": label})
                if cid != "-":
                    clusters.setdefault(cid, []).append(span)
            elif entry[0] == "v":
                frames.setdefault(entry[2], {"args": []})["predicate"] = span
            else:
                frames.setdefault(entry[3], {"args": []})["args"].append({"role": entry[2], "span": span})
        else:
            tokens.append(tok)
    assert not stack, f"unclosed marker in: {markup}"
    record = {
        "frames": [frames[k] for k in sorted(frames, key=lambda k: frames[k]["predicate"][0])],
        "mentions": sorted(mentions, key=lambda m: m["span"]),
        "clusters": [sorted(v) for _, v in sorted(clusters.items())],
    }
    return tokens, record


def write(directory, stories):
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "stories.txt", "w", encoding="utf-8") as s, open(
        directory / "annotations.jsonl", "w", encoding="utf-8"
    ) as a:
        for markup in stories:
            tokens, record = parse(markup)
            s.write(" ".join(tokens) + "\n")
            a.write(json.dumps(record, sort_keys=True) + "\n")


GOLDEN = [
    # 1
    "<a:ARG0:1> <m:c1:PERSON> Bilbo Baggins </m> </a> <v:1> walked </v> <a:ARGM-DIR:1> to <m:-:LOC> Rivendell </m> </a> . "
    "<a:ARG0:2> <m:c1:-> He </m> </a> <v:2> ate </v> <a:ARG1:2> the cake </a> . "
    "<a:ARG0:3> <m:c1:-> The hobbit </m> </a> <v:3> walked </v> <a:ARGM-DIR:3> home </a> .",
    # 2
    "<a:ARG0:1> <m:c1:PERSON> Mira </m> </a> <v:1> found </v> <a:ARG1:1> a map </a> . "
    "<a:ARG0:2> <m:c1:-> She </m> </a> <v:2> gave </v> <a:ARG1:2> it </a> <a:ARG2:2> to <m:c2:PERSON> Tom </m> </a> . "
    "<a:ARG0:3> <m:c2:-> He </m> </a> <v:3> read </v> <a:ARG1:3> the map </a> .",
    # 3
    "<a:ARG0:1> <m:c1:ORG> The Guild </m> </a> <v:1> sent </v> <a:ARG1:1> a letter </a> . "
    "<a:ARG0:2> <m:-:PERSON> Ada </m> </a> <v:2> read </v> <a:ARG1:2> the letter </a> .",
    # 4
    "<a:ARG1:1> The rain </a> <v:1> fell </v> . "
    "<a:ARG0:2> Nobody </a> <v:2> walked </v> <a:ARGM-LOC:2> outside </a> .",
    # 5
    "<a:ARG0:1> <m:c1:PERSON> Lena </m> </a> <v:1> saw </v> <a:ARG1:1> <m:c2:PERSON> Paul </m> </a> . "
    "<a:ARG0:2> <m:c2:-> He </m> </a> <v:2> saw </v> <a:ARG1:2> <m:c1:-> her </m> </a> . "
    "<a:ARG0:3> <m:c1:PERSON> Lena </m> </a> <v:3> smiled </v> .",
    # 6
    "<a:ARG0:1> <m:c1:PERSON> Captain Reyes </m> </a> <v:1> took </v> <a:ARG1:1> the ship </a> <a:ARGM-DIR:1> to <m:c2:LOC> Port Vell </m> </a> . "
    "<a:ARG0:2> <m:c1:PERSON> Reyes </m> </a> <v:2> took </v> <a:ARG1:2> the gold </a> . "
    "<a:ARG0:3> <m:c1:-> The captain </m> </a> <v:3> left </v> <a:ARG1:3> <m:c2:LOC> Port Vell </m> </a> .",
    # 7
    "<a:ARG0:1> <m:c1:PERSON> Omar </m> </a> <v:1> ran </v> . "
    "<a:ARG0:2> <m:c1:-> he </m> </a> <v:2> ran </v> <a:ARGM-DIR:2> again </a> . "
    "<a:ARG0:3> <m:c1:-> he </m> </a> <v:3> stopped </v> .",
    # 8
    "<a:ARG0:1> <m:c1:PERSON> Ivy </m> </a> <v:1> opened </v> <a:ARG1:1> the door </a> . "
    "<a:ARG0:2> <m:c2:PERSON> Sam </m> </a> <v:2> opened </v> <a:ARG1:2> the window </a> . "
    "<a:ARG0:3> <m:c1:-> She </m> </a> <v:3> thanked </v> <a:ARG1:3> <m:c2:-> him </m> </a> . "
    "<a:ARG0:4> <m:c2:-> He </m> </a> <v:4> laughed </v> .",
    # 9
    "<a:ARG0:1> <m:c1:PERSON> Nadia </m> </a> <v:1> walked </v> <a:ARGM-DIR:1> to <m:-:LOC> Oslo </m> </a> . "
    "<a:ARG0:2> <m:-:PERSON> Oren </m> </a> <v:2> walked </v> <a:ARGM-DIR:2> to <m:-:LOC> Bergen </m> </a> . "
    "<a:ARG0:3> <m:c1:-> Nadia's sister </m> </a> <v:3> called </v> .",
    # 10
    "<a:ARG0:1> <m:c1:PERSON> Kai </m> </a> <v:1> ate </v> . "
    "<a:ARG0:2> <m:c1:-> He </m> </a> <v:2> eats </v> <a:ARGM-TMP:2> daily </a> . "
    "<a:ARG0:3> <m:c1:-> Kai </m> </a> <v:3> eating </v> <a:ARG1:3> bread </a> <v:4> helps </v> .",
]


FIRST = ["Mira", "Tobin", "Elsa", "Garrick", "Nadia", "Oren", "Lena", "Paul", "Ada", "Kai", "Ivy", "Omar",
         "Rosa", "Hugo", "Tess", "Bram", "Zara", "Niles", "Cora", "Felix"]
LAST = ["Stone", "Baggins", "Reyes", "Holt", "Marsh", "Quill", "Vance", "Ember", "Frost", "Lark"]
TITLES = ["Captain", "Doctor", "Lady", "Sir"]
ORGS = ["the Guild", "the Council", "the Night Watch", "the Royal Bank", "the Order of Ash"]
LOCS = ["Rivendell", "Port Vell", "Oslo", "the Iron Hills", "Bergen", "Lake Town", "the Grey Wood"]
NOMINALS = {"he": ["the man", "the hobbit", "the old sailor", "the boy"],
            "she": ["the woman", "the girl", "the old captain", "the healer"]}
PRONOUN_FORMS = {"he": ("He", "he", "him"), "she": ("She", "she", "her")}
VERBS = [("found", "ARG1", ["the map", "a key", "a letter", "the sword"]),
         ("took", "ARG1", ["the lantern", "a coin", "the ring", "the boat"]),
         ("opened", "ARG1", ["the door", "the chest", "a window", "the gate"]),
         ("carried", "ARG1", ["the basket", "a lamp", "the book", "the bread"]),
         ("lost", "ARG1", ["the path", "a glove", "the key", "her hat"]),
         ("watched", "ARG1", ["the sea", "the fire", "the birds", "the road"])]


def character(rng, used):
    while True:
        first = rng.choice(FIRST)
        if first not in used:
            break
    used.add(first)
    gender = rng.choice(["he", "she"])
    style = rng.random()
    if style < 0.3:
        full = f"{first} {rng.choice(LAST)}"
    elif style < 0.45:
        full = f"{rng.choice(TITLES)} {first}"
    else:
        full = first
    return {"first": first, "full": full, "gender": gender, "nominal": rng.choice(NOMINALS[gender])}


def reference(rng, char, cid, position, initial):
    """Markup for one mention of `char`; position 0 is its first mention."""
    subject, _, obj = PRONOUN_FORMS[char["gender"]]
    if position == 0:
        return f"<m:{cid}:PERSON> {char['full']} </m>"
    r = rng.random()
    if r < 0.35:
        word = subject if initial else obj
        return f"<m:{cid}:-> {word} </m>"
    if r < 0.5:
        nominal = char["nominal"]
        if initial:
            nominal = nominal[0].upper() + nominal[1:]
        return f"<m:{cid}:-> {nominal} </m>"
    if r < 0.75 and char["full"] != char["first"]:
        return f"<m:{cid}:PERSON> {char['first']} </m>"
    return f"<m:{cid}:PERSON> {char['full']} </m>"


def templated_story(rng):
    used = set()
    chars = [character(rng, used) for _ in range(rng.randint(1, 3))]
    seen = [0] * len(chars)
    org = rng.choice(ORGS)
    loc = rng.choice(LOCS)
    sentences = []
    frame = 0
    for s in range(rng.randint(3, 7)):
        frame += 1
        k = rng.randrange(len(chars))
        subj = reference(rng, chars[k], f"c{k}", seen[k], True)
        seen[k] += 1
        verb, role, objects = rng.choice(VERBS)
        kind = rng.random()
        if kind < 0.2:
            sentences.append(
                f"<a:ARG0:{frame}> {subj} </a> <v:{frame}> walked </v> <a:ARGM-DIR:{frame}> to "
                f"<m:loc:LOC> {loc} </m> </a> .")
        elif kind < 0.35 and len(chars) > 1:
            j = (k + 1) % len(chars)
            obj = reference(rng, chars[j], f"c{j}", seen[j], False)
            seen[j] += 1
            sentences.append(
                f"<a:ARG0:{frame}> {subj} </a> <v:{frame}> saw </v> <a:ARG1:{frame}> {obj} </a> <newline>")
        elif kind < 0.45:
            sentences.append(
                f"<a:ARG0:{frame}> {subj} </a> <v:{frame}> wrote </v> <a:ARG2:{frame}> to "
                f"<m:org:ORG> {org} </m> </a> !")
        elif kind < 0.55:
            sentences.append(
                f"\" <a:ARG0:{frame}> {subj} </a> <v:{frame}> {verb} </v> <a:{role}:{frame}> "
                f"{rng.choice(objects)} </a> . \"")
        else:
            sentences.append(
                f"<a:ARG0:{frame}> {subj} </a> <v:{frame}> {verb} </v> <a:{role}:{frame}> "
                f"{rng.choice(objects)} </a> .")
    text = " ".join(sentences)
    if not text.endswith(("\"", ".", "!")):
        text += " ."
    return text


def main():
    write(HERE / "golden", GOLDEN)
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 120
    rng = random.Random(20181)
    write(HERE / "annotated", [templated_story(rng) for _ in range(count)])


if __name__ == "__main__":
    main()
