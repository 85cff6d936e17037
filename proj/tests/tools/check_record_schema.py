#!/usr/bin/env python3
"""Validates the annotation-record fixtures against the shared JSON schema."""

import json
import pathlib
import sys

import jsonschema

root = pathlib.Path(sys.argv[1])
schema = json.loads((root / "schemas" / "annotation_records.schema.json").read_text(encoding="utf-8"))
jsonschema.Draft202012Validator.check_schema(schema)
validator = jsonschema.Draft202012Validator(schema)

failures = 0
count = 0
for line in (root / "tests" / "fixtures" / "annotation_records.jsonl").read_text(encoding="utf-8").splitlines():
    if not line.strip():
        continue
    case = json.loads(line)
    count += 1
    valid = validator.is_valid(case["record"])
    if valid != case["expect_valid"]:
        failures += 1
        print(f"FAIL {case['why']}: schema says valid={valid}")
print(f"{count - failures}/{count} fixtures agree with the schema")
sys.exit(1 if failures else 0)
