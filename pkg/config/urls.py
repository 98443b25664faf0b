# config/urls.py
from django.contrib import admin
from django.urls import path

urlpatterns = [
    # run ledger browser
    path("admin/", admin.site.urls),
]
