import sys

from gestdiff.main import main


sys.exit(main())
