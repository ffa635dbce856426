"""Regenerate the hallucination-audit fixtures in this directory.

Each predictions file mimics a generative model's output on one dataset:
every sample predicts 1-3 taxonomy labels, and a fixed number of samples
also contain a label that is not in the taxonomy.

    python tests/fixtures/make_fixtures.py
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).parent

ECTHR_ARTICLES = [
    ("Article 2", "Right to life"),
    ("Article 3", "Prohibition of torture"),
    ("Article 5", "Right to liberty and security"),
    ("Article 6", "Right to a fair trial"),
    ("Article 8", "Right to respect for private and family life"),
    ("Article 9", "Freedom of thought, conscience and religion"),
    ("Article 10", "Freedom of expression"),
    ("Article 11", "Freedom of assembly and association"),
    ("Article 14", "Prohibition of discrimination"),
    ("Article 1 of Protocol 1", "Protection of property"),
]

EUROVOC_TOPICS = """
EU law; external trade; economic analysis; agricultural policy; fisheries policy; competition law;
consumer protection; customs regulations; tariff policy; trade policy; public health; food safety;
animal health; plant health; veterinary legislation; environmental policy; pollution control;
waste management; energy policy; electrical energy; oil industry; nuclear energy; transport policy;
maritime transport; air transport; road transport; rail transport; regional policy; social policy;
employment; labour law; education policy; vocational training; research policy; information technology;
telecommunications; financial institutions; monetary policy; taxation; value added tax; budget;
public contract; state aid; industrial policy; iron and steel industry; chemical industry;
pharmaceutical industry; textile industry; automotive industry; aerospace industry; agricultural product;
cereals; fruit; vegetable; dairy products; meat; wine; sugar; oils and fats; fishery product;
animal feed; seed; fertiliser; plant protection product; foodstuff; beverage; tobacco; import; export;
import licence; export refund; anti-dumping duty; rules of origin; free trade area; third country;
developing countries; development aid; humanitarian aid; international agreement; association agreement;
enlargement of the Union; EU institution; European Commission; Council of the European Union;
European Parliament; Court of Justice; intellectual property; industrial design; trademark law;
company law; migration; asylum; border control; judicial cooperation; police cooperation;
market approval; product safety; technical standard; marketing; distributive trades
"""


def eurlex_taxonomy():
    names = [t.strip() for t in EUROVOC_TOPICS.replace("\n", " ").split(";") if t.strip()]
    assert len(names) == 100, len(names)
    assert "statistics" not in names and "insurance" not in names
    return [(n, f"EuroVoc descriptor: {n}") for n in names]


def write(name, taxonomy, n_samples, hallucinations, seed, pad_whitespace=0):
    rng = random.Random(seed)
    ids = [t[0] for t in taxonomy]
    with open(HERE / f"{name}_taxonomy.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for label_id, desc in taxonomy:
            fh.write(json.dumps({"id": label_id, "name": label_id, "description": desc}) + "\n")
    bad_rows = rng.sample(range(n_samples), len(hallucinations))
    bad_at = dict(zip(bad_rows, hallucinations))
    padded = set(rng.sample([i for i in range(n_samples) if i not in bad_at], pad_whitespace))
    with open(HERE / f"{name}_generative_predictions.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for i in range(n_samples):
            labels = rng.sample(ids, rng.randint(1, 3))
            if i in padded:
                labels[0] = f" {labels[0]} "
            if i in bad_at:
                labels.insert(rng.randint(0, len(labels)), bad_at[i])
            fh.write(json.dumps({"doc_id": f"{name}-{i:05d}", "labels": labels}) + "\n")


def main():
    write("ecthr_a", ECTHR_ARTICLES, 1000, ["Article 7"] * 5 + ["Article 18"] * 4, seed=1, pad_whitespace=5)
    write("ecthr_b", ECTHR_ARTICLES, 1000, ["Article 13"] * 4 + ["Article 7"] * 3, seed=2)
    write("eurlex", eurlex_taxonomy(), 5000, ["statistics"] * 4 + ["insurance"] * 2, seed=3)


if __name__ == "__main__":
    main()
