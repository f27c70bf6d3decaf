import sys

from omjump.cli import main

sys.exit(main())
