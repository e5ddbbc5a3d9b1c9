"""Convert a public graph dump into the edge-list / CSV layout read by ``lac``.

    python scripts/convert_dataset.py linqs cora.content cora.cites data/cora
    python scripts/convert_dataset.py planetoid raw/ citeseer data/citeseer
"""
import argparse
import sys

from lac.graphio import convert_linqs, convert_planetoid, load_graph


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="fmt", required=True)
    p = sub.add_parser("linqs", help="LINQS .content/.cites pair")
    p.add_argument("content")
    p.add_argument("cites")
    p.add_argument("out_dir")
    p.add_argument("--name", default="cora")
    p = sub.add_parser("planetoid", help="Planetoid ind.<name>.* pickles")
    p.add_argument("raw_dir")
    p.add_argument("name")
    p.add_argument("out_dir")
    args = parser.parse_args(argv)

    if args.fmt == "linqs":
        paths = convert_linqs(args.content, args.cites, args.out_dir, args.name)
    else:
        paths = convert_planetoid(args.raw_dir, args.name, args.out_dir)
    g = load_graph(paths["edges"], paths["features"], paths["labels"])
    print(f"wrote {paths['edges']}: n={g.n} edges={g.num_edges} d={g.features.shape[1]} classes={g.labels.max() + 1}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
