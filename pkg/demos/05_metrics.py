"""The evaluation metrics on small hand-checkable cases."""

from xduct.metrics import acc, edit_distance, evaluate, f_score, mld, per, wer

print("ED(kitten, sitting) =", edit_distance("kitten", "sitting"))

ref = "AE K SH AH N".split()
hyp = "AE K SH AH M".split()
print("PER, one substitution in five phonemes =", per([ref], [hyp]))

refs = [f"w{k}" for k in range(10)]
hyps = refs[:7] + ["x", "y", "z"]
print(f"3 wrong of 10: WER {wer(refs, hyps):.2f}, ACC {acc(refs, hyps):.1f}")

print(f"F-score(abd vs abc) = {f_score('abd', 'abc'):.4f}  (LCS 2.5 of 3)")
print("MLD with distances 1 and 3 =", mld(["abc", "abc"], ["abd", "xyz"]))

report = evaluate([ref, ref], [hyp, ref], ["action", "action"], joiner=" ")
for task in ("g2p", "translit", "inflection"):
    print(f"{task:10s} {report.summary_line(task)}")
