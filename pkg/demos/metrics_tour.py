"""Tour of the Hamming retrieval metrics on a hand-sized example.

Everything here is small enough to check by hand: 2 queries, 6 gallery
codes, 4 bits.  Shows distance computation with the zero-bit convention,
ranking with index tie-breaks, AP, MAP, precision within a radius, the
precision-recall curve, and precision at fixed list depths.
"""

import numpy as np

from nmhash.metrics import (
    mean_average_precision,
    pairwise_hamming,
    pr_curve,
    precision_at_hamming_radius,
    precision_at_top_n,
    retrieve,
    sign_pm1,
)

# Codes live in {-1, +1}; an exact 0 marks a bit that a merged group left
# undecided (a tied vote), and it costs half a bit against either sign.
gallery = np.array([
    [+1, +1, +1, +1],
    [+1, +1, +1, -1],
    [+1, +1, -1, -1],
    [-1, -1, -1, -1],
    [-1, -1, -1, +1],
    [+1, +1, 0, -1],   # one undecided bit
], dtype=float)
gallery_labels = [{0}, {1}, {1}, {1}, {1}, {0}]

queries = np.array([
    [+1, +1, +1, +1],
    [-1, -1, -1, -1],
], dtype=float)
query_labels = [{0}, {1}]

print("sign convention: sign_pm1([-0.3, 0.0, 2.1]) =",
      sign_pm1(np.array([-0.3, 0.0, 2.1])))

dists = pairwise_hamming(queries, gallery)
print("\npairwise Hamming distances (rows = queries):")
print(dists)
print("note the half distances in the last column: the undecided bit")

result = retrieve(queries, query_labels, gallery, gallery_labels)
for i in range(len(queries)):
    print(f"\nquery {i} (labels {set(query_labels[i])}):")
    print(f"  ranked gallery indices: {result.ranked_indices[i].tolist()}")
    print(f"  relevance down the list: {result.ranked_relevance[i].tolist()}")
    print(f"  average precision: {result.average_precisions[i]:.4f}")

map_value = mean_average_precision(queries, query_labels,
                                   gallery, gallery_labels)
print(f"\nMAP over both queries: {map_value:.4f}")

p_at_r = precision_at_hamming_radius(queries, query_labels,
                                     gallery, gallery_labels, radius=2.0)
print(f"precision within Hamming radius 2: {p_at_r:.4f}")

print("\nprecision-recall curve (threshold sweep in half-bit steps):")
for point in pr_curve(queries, query_labels, gallery, gallery_labels):
    print(f"  dist <= {point.threshold:3.1f}  "
          f"precision {point.precision:.4f}  recall {point.recall:.4f}")

for n, value in zip([1, 3, 5], precision_at_top_n(
        queries, query_labels, gallery, gallery_labels, [1, 3, 5])):
    print(f"precision@top-{n}: {value:.4f}")
