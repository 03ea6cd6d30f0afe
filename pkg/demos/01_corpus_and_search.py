"""Build an inverted index over a tiny corpus and rank documents with BM25.

Run:  python3 demos/01_corpus_and_search.py
"""

from rraml.corpus import Document, bm25_score, build_index, tokenize, top_n

docs = [
    Document(id="news-1", text="The city council approved the new bridge design"),
    Document(id="news-2", text="Bridge construction begins next spring downtown"),
    Document(id="news-3", text="The council debated the downtown parking budget"),
    Document(id="news-4", text="Spring festival schedule announced for the city"),
]

index = build_index(docs)
print(f"indexed {index.doc_count} docs, avg length {index.avg_doc_len:.2f} tokens")
print(f"vocabulary size: {len(index.postings)}")

# Rank everything for a query. Scores are Okapi BM25 (k1=1.2, b=0.75);
# only docs with positive score make the pool.
for query in ("bridge construction", "downtown council", "olympic medals"):
    pool = top_n(index, tokenize(query), n=3, query_id=query)
    print(f"\nquery: {query!r}")
    if not pool.entries:
        print("  (no matching documents)")
    for doc_id, score in pool.entries:
        print(f"  {score:6.3f}  {doc_id}")

# Point scores agree with the pool ranking bit-for-bit.
score = bm25_score(index, tokenize("bridge construction"), "news-2")
print(f"\nbm25_score(news-2 | 'bridge construction') = {score:.6f}")
