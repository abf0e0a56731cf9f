"""pacset-export: convert a trained model file to interchange JSON.

sklearn models load from pickle/joblib files; xgboost models load from the
booster's native JSON dump (Booster.save_model("model.json")).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import ExportError, export_sklearn, export_xgboost


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pacset-export", description=__doc__)
    parser.add_argument("--framework", choices=("sklearn", "xgboost"),
                        required=True)
    parser.add_argument("--model", required=True,
                        help="pickle/joblib file (sklearn) or JSON dump (xgboost)")
    parser.add_argument("--out", required=True, help="interchange JSON path")
    args = parser.parse_args(argv)

    try:
        if args.framework == "sklearn":
            import joblib
            doc, report = export_sklearn(joblib.load(args.model))
        else:
            with open(args.model, "rb") as fh:
                doc, report = export_xgboost(fh.read())
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"wrote {args.out}: {report.trees_exported} trees, "
          f"{report.total_nodes} nodes")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
