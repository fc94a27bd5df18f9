''' Current version of fampe'''

version = '0.3'
