'''
Launcher of the **fampe** command line: ``python -m fampe <command> ...``.
'''

import sys

from fampe.cli.start_fampe import main

if __name__ == '__main__':
    sys.exit(main())
