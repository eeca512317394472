import sys

from fdaudit.cli import main

sys.exit(main())
