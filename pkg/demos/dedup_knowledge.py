"""Near-duplicate removal over a small knowledge base.

Builds a toy knowledge base containing paraphrase clusters, embeds
every entry, and removes near duplicates by thresholded cosine
similarity. Entries above the threshold join the same connected
component and only the lowest id of each component survives.
"""

from kbvqa import KnowledgeBase, KnowledgeInstance, dedup, embed_kb, reference_profile

TEXTS = [
    "leonard repairs the broken projector before the lecture",
    "leonard repairs the broken projector before the big lecture",
    "leonard fixes the broken projector before the lecture",
    "penny practices her lines on the staircase",
    "penny practices her lines out on the staircase",
    "sheldon catalogs his comic collection by print year",
    "howard shows off a new magic trick at dinner",
    "raj brings his telescope to the rooftop party",
]


def main():
    kb = KnowledgeBase(
        [KnowledgeInstance(id=i, text=t, embedding=None) for i, t in enumerate(TEXTS)],
        reference_profile(),
    )
    kb = embed_kb(kb)
    print("knowledge base size:", kb.size)

    for threshold in (0.9, 0.99):
        clean, report = dedup(kb, threshold=threshold)
        print()
        print("threshold %.2f: %d -> %d entries (%d removed)" % (
            threshold, kb.size, clean.size, report.removed_count))
        for cluster in report.clusters:
            if len(cluster) < 2:
                continue
            print("  cluster %s survives as id %d:" % (cluster, min(cluster)))
            for i in cluster:
                marker = "+" if i in report.kept else "-"
                print("   %s [%d] %s" % (marker, i, TEXTS[i]))


if __name__ == "__main__":
    main()
