import sys

from gbll.cli import main

sys.exit(main())
