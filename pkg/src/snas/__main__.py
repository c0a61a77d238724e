import sys

from snas.cli import main

sys.exit(main())
