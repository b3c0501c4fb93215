#!/usr/bin/env python3
"""Generate the bundled 20-utterance mini-corpus and its ground truth.

Writes, under crates/core/tests/fixtures/:
  mini_so762/            Speechocean762-layout corpus (test split only)
  mini_ground_truth.json values recorded at generation time
  stored_predictions.ndjson  capt-raw/1 responses from a fictional model

Ground truth is computed here, independently of the Rust implementation:
edit distances by exhaustive enumeration of optimal alignments, Pearson r
and two-sided t p-values with mpmath at 50 digits.
"""
import json
import os
import random
import struct
import wave

import mpmath

mpmath.mp.dps = 50

ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures")
CORPUS = os.path.join(ROOT, "mini_so762")

SENTENCES = [
    ("WE CALL IT BEAR", [["W", "IY1"], ["K", "AO1", "L"], ["IH1", "T"], ["B", "EH1", "R"]]),
    ("MARK IS GOING TO SEE ELEPHANT", [["M", "AA1", "R", "K"], ["IH1", "Z"], ["G", "OW1", "IH0", "NG"],
                                       ["T", "UW1"], ["S", "IY1"], ["EH1", "L", "AH0", "F", "AH0", "N", "T"]]),
    ("THAT'S AN INTERESTING OBSERVATION", [["DH", "AE1", "T", "S"], ["AE1", "N"],
                                           ["IH1", "N", "T", "R", "AH0", "S", "T", "IH0", "NG"],
                                           ["AA2", "B", "Z", "ER0", "V", "EY1", "SH", "AH0", "N"]]),
    ("I LIKE TO READ BOOKS", [["AY1"], ["L", "AY1", "K"], ["T", "UW1"], ["R", "IY1", "D"], ["B", "UH1", "K", "S"]]),
    ("THE WEATHER IS NICE TODAY", [["DH", "AH0"], ["W", "EH1", "DH", "ER0"], ["IH1", "Z"], ["N", "AY1", "S"],
                                   ["T", "AH0", "D", "EY1"]]),
    ("SHE SELLS FISH", [["SH", "IY1"], ["S", "EH1", "L", "Z"], ["F", "IH1", "SH"]]),
    ("MY FATHER WORKS HARD", [["M", "AY1"], ["F", "AA1", "DH", "ER0"], ["W", "ER1", "K", "S"], ["HH", "AA1", "R", "D"]]),
    ("CAN YOU HELP ME", [["K", "AE1", "N"], ["Y", "UW1"], ["HH", "EH1", "L", "P"], ["M", "IY1"]]),
    ("WE PLAY FOOTBALL ON SUNDAY", [["W", "IY1"], ["P", "L", "EY1"], ["F", "UH1", "T", "B", "AO2", "L"],
                                    ["AA1", "N"], ["S", "AH1", "N", "D", "EY2"]]),
    ("THE CHILDREN ARE HAPPY", [["DH", "AH0"], ["CH", "IH1", "L", "D", "R", "AH0", "N"], ["AA1", "R"],
                                ["HH", "AE1", "P", "IY0"]]),
]

SPEAKERS = [("0001", 17, "f"), ("0002", 23, "m"), ("0003", 31, "f"), ("0004", 19, "m"), ("0005", 44, "f")]

SUB_POOL = ["AA", "AE", "AH", "AX", "IH", "IX", "IY", "EH", "UW", "UH", "D", "T", "S", "Z", "L", "R", "N",
            "DX", "SH", "F", "V", "W"]


def strip(tok):
    return tok.rstrip("012")


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (x != y), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def optimal_flag_sets(canonical, perceived):
    """All canonical-position flag sets over every minimal alignment."""
    n, m = len(canonical), len(perceived)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j - 1] + (canonical[i - 1] != perceived[j - 1]), d[i - 1][j] + 1, d[i][j - 1] + 1)
    out = set()

    def walk(i, j, flags):
        if i == 0 and j == 0:
            out.add(tuple(flags))
            return
        if i > 0 and j > 0 and d[i - 1][j - 1] + (canonical[i - 1] != perceived[j - 1]) == d[i][j]:
            f = list(flags)
            f[i - 1] = canonical[i - 1] != perceived[j - 1]
            walk(i - 1, j - 1, f)
        if i > 0 and d[i - 1][j] + 1 == d[i][j]:
            f = list(flags)
            f[i - 1] = True
            walk(i - 1, j, f)
        if j > 0 and d[i][j - 1] + 1 == d[i][j]:
            walk(i, j - 1, flags)

    walk(n, m, [False] * n)
    return out


def pearson(x, y):
    x = [mpmath.mpf(v) for v in x]
    y = [mpmath.mpf(v) for v in y]
    n = len(x)
    mx = mpmath.fsum(x) / n
    my = mpmath.fsum(y) / n
    sxy = mpmath.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = mpmath.fsum((a - mx) ** 2 for a in x)
    syy = mpmath.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return None, None
    r = sxy / mpmath.sqrt(sxx * syy)
    return r, t_two_sided(r, n)


def t_two_sided(r, n):
    df = n - 2
    if df <= 0:
        return mpmath.mpf(1)
    if abs(r) >= 1:
        return mpmath.mpf(0)
    t2 = r * r * df / (1 - r * r)
    return mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, df / (df + t2), regularized=True)


def write_silence(path, seconds=0.1, rate=16000):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(struct.pack("<h", 0) * int(seconds * rate))


def main():
    rng = random.Random(762)
    scores = {}
    utts = []
    idx = 0
    for s_i, (spk, age, gender) in enumerate(SPEAKERS):
        for k in range(4):
            idx += 1
            utt_id = f"{spk}{idx:05d}"
            text, words = SENTENCES[(s_i * 4 + k) % len(SENTENCES)]
            flat = [strip(p) for w in words for p in w]
            while True:
                # Draw sparse, non-adjacent errors until the annotation is
                # unambiguous under every minimal alignment.
                errors = {}
                force_clean = idx in (1, 6, 11, 16)
                for pos in range(len(flat)):
                    if force_clean or (pos - 1) in errors:
                        continue
                    if rng.random() < 0.14:
                        kind = rng.choices(["sub", "del", "unk"], [0.6, 0.25, 0.15])[0]
                        if kind == "sub":
                            choice = rng.choice([p for p in SUB_POOL if p != flat[pos]])
                            errors[pos] = ("sub", choice)
                        else:
                            errors[pos] = (kind, None)
                perceived, flags = [], []
                for pos, ph in enumerate(flat):
                    e = errors.get(pos)
                    if e is None:
                        perceived.append(ph)
                        flags.append(False)
                    elif e[0] == "sub":
                        perceived.append(e[1])
                        flags.append(True)
                    elif e[0] == "del":
                        flags.append(True)
                    else:
                        perceived.append("<unk>")
                        flags.append(True)
                sets = optimal_flag_sets(flat, perceived)
                if sets == {tuple(flags)}:
                    break
            # Build upstream word records.
            word_recs = []
            base = 0
            for w_text, phones in zip(text.split(), words):
                acc, mis = [], []
                for i, ph in enumerate(phones):
                    e = errors.get(base + i)
                    if e is None:
                        acc.append(2.0 if rng.random() < 0.85 else 1.0)
                    elif e[0] == "sub":
                        acc.append(0.0)
                        mis.append({"canonical-phone": ph, "index": i, "pronounced-phone": e[1]})
                    elif e[0] == "del":
                        acc.append(0.0)
                        mis.append({"canonical-phone": ph, "index": i, "pronounced-phone": "<DEL>"})
                    else:
                        acc.append(0.0)
                word_recs.append({"text": w_text, "accuracy": 10 - 3 * len(mis), "stress": 10, "total": 10,
                                  "phones": phones, "phones-accuracy": acc, "mispronunciations": mis})
                base += len(phones)
            n_err = sum(flags)
            rate = n_err / len(flat)
            accuracy = max(0, min(10, round(9.4 - 22 * rate + rng.uniform(-1.2, 1.2))))
            fluency = max(0, min(10, round(accuracy + rng.uniform(-1.6, 1.6))))
            prosodic = max(0, min(10, round(accuracy + rng.uniform(-1.4, 1.4))))
            total = max(0, min(10, round((accuracy + fluency + prosodic) / 3 + rng.uniform(-0.5, 0.5))))
            scores[utt_id] = {"text": text, "accuracy": accuracy, "completeness": 10.0, "fluency": fluency,
                              "prosodic": prosodic, "total": total, "words": word_recs}
            edits = levenshtein(perceived, flat)
            utts.append({"utt_id": utt_id, "speaker": spk, "text": text, "canonical": " ".join(flat),
                         "perceived": " ".join(perceived), "flags": flags, "edits": edits,
                         "perceived_len": len(perceived),
                         "scores": {"accuracy": accuracy, "fluency": fluency, "prosodic": prosodic,
                                    "total": total}})

    assert sum(sum(u["flags"]) for u in utts) > 0
    os.makedirs(os.path.join(CORPUS, "resource"), exist_ok=True)
    os.makedirs(os.path.join(CORPUS, "test"), exist_ok=True)
    with open(os.path.join(CORPUS, "resource", "scores.json"), "w") as f:
        json.dump(scores, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(os.path.join(CORPUS, "test", "text"), "w") as f:
        for u in utts:
            f.write(f"{u['utt_id']} {u['text']}\n")
    with open(os.path.join(CORPUS, "test", "utt2spk"), "w") as f:
        for u in utts:
            f.write(f"{u['utt_id']} {u['speaker']}\n")
    with open(os.path.join(CORPUS, "test", "wav.scp"), "w") as f:
        for u in utts:
            f.write(f"{u['utt_id']} WAVE/SPEAKER{u['speaker']}/{u['utt_id']}.WAV\n")
    with open(os.path.join(CORPUS, "test", "spk2age"), "w") as f:
        for spk, age, _ in SPEAKERS:
            f.write(f"{spk} {age}\n")
    with open(os.path.join(CORPUS, "test", "spk2gender"), "w") as f:
        for spk, _, g in SPEAKERS:
            f.write(f"{spk} {g}\n")
    first = utts[0]
    write_silence(os.path.join(CORPUS, "WAVE", f"SPEAKER{first['speaker']}", f"{first['utt_id']}.WAV"))

    # Ground truth.
    n_spk = len(SPEAKERS)
    bands = {"under20": 0, "twenties": 0, "thirties": 0, "forties": 0, "fifty_plus": 0, "unknown": 0}
    for _, age, _ in SPEAKERS:
        key = "under20" if age < 20 else "twenties" if age < 30 else "thirties" if age < 40 else \
            "forties" if age < 50 else "fifty_plus"
        bands[key] += 1
    genders = {"male": sum(g == "m" for *_, g in SPEAKERS), "female": sum(g == "f" for *_, g in SPEAKERS),
               "unknown": 0}
    canonical_phones = sum(len(u["flags"]) for u in utts)
    mis = sum(sum(u["flags"]) for u in utts)
    per_errors = sum(u["edits"] for u in utts)
    per_ref = sum(u["perceived_len"] for u in utts)
    per_utt = [mpmath.mpf(u["edits"]) / u["perceived_len"] for u in utts]
    human_acc = [u["scores"]["accuracy"] for u in utts]
    r_canon, p_canon = pearson(per_utt, human_acc)

    truth = {
        "utterances": len(utts),
        "test_files": len(utts),
        "test_speakers": n_spk,
        "age": {k: {"count": v, "percent": f"{100 * v / n_spk:.1f}"} for k, v in bands.items()},
        "gender": {k: {"count": v, "percent": f"{100 * v / n_spk:.1f}"} for k, v in genders.items()},
        "canonical_phones": canonical_phones,
        "mispronounced_phones": mis,
        "canonical_mock_per": {"errors": per_errors, "reference_len": per_ref},
        "canonical_mock_correlation": {"r": mpmath.nstr(r_canon, 30), "p": mpmath.nstr(p_canon, 30)},
        "per_utterance": utts,
    }

    # Stored predictions from a fictional model: APA scores near the human
    # ones except fluency, MDD output with a few extra edits, one garbage
    # response, and formatting variations the parser must tolerate.
    prng = random.Random(4463)
    raw_lines = [{"schema": "capt-raw/1", "backend_id": "fixture:stored", "split": "test",
                  "tasks": ["APA", "MDD"], "control_tokens": True,
                  "decode": {"temperature": 0.0, "max_new_tokens": 512}}]
    pred = {"accuracy": [], "fluency": [], "prosodic": [], "total": []}
    human = {"accuracy": [], "fluency": [], "prosodic": [], "total": []}
    fluency_cycle = [5, 9, 6, 8, 7, 4, 9, 5, 8, 6, 7, 9, 4, 6, 8, 5, 7, 9, 6]
    for i, u in enumerate(utts):
        s = u["scores"]
        if i == 7:
            apa_text = "I am sorry, I cannot rate this audio."
        else:
            p = {"accuracy": max(0, min(10, s["accuracy"] + prng.choice([-1, 0, 0, 1]))),
                 "fluency": fluency_cycle[len(pred["fluency"]) % len(fluency_cycle)],
                 "prosodic": max(0, min(10, s["prosodic"] + prng.choice([-1, 0, 1]))),
                 "total": max(0, min(10, s["total"] + prng.choice([-1, 0, 0, 1])))}
            for k in pred:
                pred[k].append(p[k])
                human[k].append(s[k])
            body = "{'accuracy': %d, 'fluency': %d, 'prosodic': %d, 'total': %d}" % (
                p["accuracy"], p["fluency"], p["prosodic"], p["total"])
            if i % 5 == 1:
                body = "Here is my assessment: " + body.replace("'", '"')
            apa_text = body
        raw_lines.append({"utt_id": u["utt_id"], "task": "APA", "text": apa_text, "latency_ms": 0,
                          "backend_id": "fixture:stored", "error": None})
        phones = u["perceived"].split()
        if i % 3 == 0 and len(phones) > 3:
            phones[2] = "AH" if phones[2] != "AH" else "IH"
        if i % 4 == 2:
            phones = phones[:-1]
        words = u["text"].capitalize() + "."
        if i % 6 == 5:
            words = words.replace("E", "A", 1)
        mdd_text = "{'word_transcript': '%s', 'phoneme_transcript': '%s'}" % (words, " ".join(phones))
        raw_lines.append({"utt_id": u["utt_id"], "task": "MDD", "text": mdd_text, "latency_ms": 0,
                          "backend_id": "fixture:stored", "error": None})

    stored = {}
    for k in pred:
        r, p = pearson(human[k], pred[k])
        stored[k] = {"r": mpmath.nstr(r, 30), "p": mpmath.nstr(p, 30), "n": len(pred[k])}
    assert mpmath.mpf(stored["fluency"]["p"]) >= 0.05, stored["fluency"]
    for k in ("accuracy", "prosodic", "total"):
        assert mpmath.mpf(stored[k]["p"]) < 0.05, (k, stored[k])
    truth["stored_predictions_pcc"] = stored

    with open(os.path.join(ROOT, "stored_predictions.ndjson"), "w") as f:
        for line in raw_lines:
            f.write(json.dumps(line, separators=(",", ":")) + "\n")
    with open(os.path.join(ROOT, "mini_ground_truth.json"), "w") as f:
        json.dump(truth, f, indent=1)
        f.write("\n")
    print(f"wrote {len(utts)} utterances, {mis} mispronounced of {canonical_phones} phones, "
          f"canonical PER {per_errors}/{per_ref}")
    print("stored PCC", {k: (v["r"][:8], v["p"][:8]) for k, v in stored.items()})


if __name__ == "__main__":
    main()
