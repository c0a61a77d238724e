"""
Where the channels go
=====================

Given the best architectures from a search, average the chosen width per
layer. Layers that feed the neck tend to stay at full width.
"""

from snas.archspace import ArchConfig, default_skeleton, encode
from snas.trends import trend_report

skeleton = default_skeleton()

# the two published width allocations
rows = [(1.0, 1.0, 1.0, 1.0, 1.0, 0.75, 1.0, 0.5, 0.75, 0.75, 1.0),
        (1.0, 1.0, 1.0, 1.0, 1.0, 0.75, 1.0, 0.5, 1.0, 0.75, 1.0)]
strings = [encode(ArchConfig.from_ratios(r)) for r in rows]
print(strings)

report = trend_report(strings, skeleton)
print(report.render())

# the same report is available from the CLI on any search log:
#   snas report-trends --log runs/demo/search_log.jsonl
