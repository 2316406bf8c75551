"""Stub metric emitting JSON: {"pooled_metrics": {"vmaf": {"mean": VALUE}}}"""
import json
import sys

value, ref, dist = sys.argv[1:4]
print(json.dumps({"pooled_metrics": {"vmaf": {"mean": float(value)}}}))
