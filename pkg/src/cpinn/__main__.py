import sys

from cpinn.cli import main

sys.exit(main())
