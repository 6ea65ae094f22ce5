import sys

from ionscatter.cli import main

sys.exit(main())
